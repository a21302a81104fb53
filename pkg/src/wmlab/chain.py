"""Exact Markov-chain analysis of transformation graphs.

The walk over an equivalent space is a finite chain: states are receptor
configurations (slot states plus variable naming) over a shared skeleton,
edges carry probability (action multiplicity) / (action-set size), and the
uniform-over-actions law makes all outgoing weights of a state equal.  The
inverse-rule property makes action multiplicities symmetric, so the chain is
reversible and its stationary distribution is degree-proportional.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import (CapExceededError, DegreeAsymmetryError,
                     DimensionMismatchError, NotConvergedError,
                     NotErgodicError, TooLargeError)
from .minilang import Program, VOCAB
from .rules import RuleSet, action_count, apply_indexed, reachable_states
from . import rules as rules_mod


class TransformationGraph:
    """Enumerated equivalent space with exact one-step transition weights."""

    def __init__(self, states, neighbors, degrees, rules: RuleSet, seed_index: int):
        self.states = states            # index -> Program
        self.neighbors = neighbors      # index -> {succ index: weight}
        self.degrees = degrees          # index -> |action set| (multiplicity)
        self.rules = rules
        self.seed_index = seed_index
        self.index = {p.state(): i for i, p in enumerate(states)}

    def __len__(self):
        return len(self.states)

    def state_index(self, program: Program) -> int:
        return self.index[program.state()]

    def receptor_profile(self) -> dict:
        """Receptor count, per-receptor degrees of freedom, token count."""
        seed = self.states[self.seed_index]
        cfg = self.rules.config
        dofs = []
        dofs += [1 + cfg.comment_word_pool_size] * len(seed.comment_state)
        dofs += [1 + cfg.snippet_pool_size] * len(seed.dead_state)
        nv = len(seed.var_names)
        pool = cfg.identifier_pool_size
        dofs += [max(1, pool - i) for i in range(nv)] if pool > nv else [1] * nv
        return {
            "receptor_count": len(dofs),
            "dofs": dofs,
            "token_count": len(seed.tokens),
        }

    def to_json(self) -> dict:
        states = []
        for p in self.states:
            states.append({
                "vars": [VOCAB.lexemes[t] for t in p.var_names],
                "comments": [None if s is None else VOCAB.lexemes[s]
                             for s in p.comment_state],
                "deads": [None if s is None else VOCAB.lexemes[s]
                          for s in p.dead_state],
            })
        edges = [[i, j, w] for i, nbrs in enumerate(self.neighbors)
                 for j, w in sorted(nbrs.items())]
        return {"states": states, "edges": edges}


def enumerate_space(seed: Program, rules: RuleSet, cap: int) -> TransformationGraph:
    """BFS closure under one-step transforms with exact edge weights."""
    if cap < 1:
        raise CapExceededError(cap)
    cfg = rules.config
    states = [seed]
    index = {seed.state(): 0}
    neighbors = []
    degrees = []
    cursor = 0
    while cursor < len(states):
        prog = states[cursor]
        counts = [(rule, action_count(rule, prog, cfg)) for rule in rules]
        lam = sum(c for _, c in counts)
        nbrs: dict = {}
        for rule, c in counts:
            for k in range(c):
                succ = apply_indexed(rule, prog, k, cfg)
                key = succ.state()
                j = index.get(key)
                if j is None:
                    if len(states) >= cap:
                        raise CapExceededError(cap)
                    j = len(states)
                    index[key] = j
                    states.append(succ)
                nbrs[j] = nbrs.get(j, 0) + 1
        neighbors.append({j: m / lam for j, m in nbrs.items()})
        degrees.append(lam)
        cursor += 1
    return TransformationGraph(states, neighbors, degrees, rules, 0)


def transition_matrix(graph: TransformationGraph) -> np.ndarray:
    n = len(graph)
    P = np.zeros((n, n))
    for i, nbrs in enumerate(graph.neighbors):
        for j, w in nbrs.items():
            P[i, j] = w
    if not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
        raise AssertionError("rows must sum to 1")
    return P


def _check_vector(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if abs(float(p.sum()) - 1.0) > 1e-9 or np.any(p < -1e-15):
        raise DimensionMismatchError("not a probability vector")
    return p


def step_distribution(P: np.ndarray, p) -> np.ndarray:
    """One step of the chain: p(t+1) = P^T p(t)."""
    p = _check_vector(p)
    if P.shape[0] != P.shape[1] or P.shape[0] != p.shape[0]:
        raise DimensionMismatchError(f"P is {P.shape}, p is {p.shape}")
    out = P.T @ p
    total = float(out.sum())
    if abs(total - 1.0) > 1e-12:
        out = out / total
    return out


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"{p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def _pattern_connected(neighbors, n, reverse=False) -> bool:
    adj = [[] for _ in range(n)]
    for i, nbrs in enumerate(neighbors):
        for j in nbrs:
            if reverse:
                adj[j].append(i)
            else:
                adj[i].append(j)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def _matrix_neighbors(P: np.ndarray):
    return [{int(j): float(P[i, j]) for j in np.flatnonzero(P[i] > 0)}
            for i in range(P.shape[0])]


def _ergodic(P: np.ndarray) -> bool:
    nbrs = _matrix_neighbors(P)
    n = P.shape[0]
    if not (_pattern_connected(nbrs, n) and _pattern_connected(nbrs, n, reverse=True)):
        return False
    return bool(np.any(np.diag(P) > 0))


def stationary(P: np.ndarray, tol: float = 1e-12,
               max_iters: int = 1_000_000) -> np.ndarray:
    """Power iteration to the stationary distribution (ergodicity checked)."""
    if not _ergodic(P):
        raise NotErgodicError("chain is not irreducible and aperiodic")
    n = P.shape[0]
    PT = np.ascontiguousarray(P.T)
    p = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        nxt = PT @ p
        nxt /= nxt.sum()
        if tv_distance(nxt, p) <= tol:
            p = nxt
            break
        p = nxt
    else:
        raise NotConvergedError(max_iters)
    if tv_distance(PT @ p, p) > 10 * tol:
        raise NotConvergedError(max_iters)
    return p


def degree_stationary(graph: TransformationGraph) -> np.ndarray:
    """pi_i = d_i / sum_k d_k; valid because in- and out-multiplicity match."""
    n = len(graph)
    out_mult = np.array(graph.degrees, dtype=float)
    in_mult = np.zeros(n)
    for i, nbrs in enumerate(graph.neighbors):
        di = graph.degrees[i]
        for j, w in nbrs.items():
            in_mult[j] += w * di
    if not np.allclose(in_mult, out_mult, atol=1e-9):
        raise DegreeAsymmetryError("in-degree != out-degree")
    return out_mult / out_mult.sum()


@dataclass
class MixingReport:
    start: int
    epsilon: float
    t_mix: int
    tv_trace: tuple
    deviations: np.ndarray  # |p_i - pi_i| at t_mix


def _as_csr_t(P):
    if sp.issparse(P):
        return P.T.tocsr()
    return sp.csr_matrix(np.asarray(P).T)


def mixing_report(P, start: int, pi, epsilon: float,
                  max_steps: int = 200_000) -> MixingReport:
    if not 0.0 < epsilon < 1.0:
        raise NotErgodicError(f"epsilon must be in (0,1), got {epsilon}")
    pi = np.asarray(pi, dtype=float)
    PT = _as_csr_t(P)
    n = pi.shape[0]
    p = np.zeros(n)
    p[start] = 1.0
    trace = [tv_distance(p, pi)]
    t = 0
    while trace[-1] > epsilon:
        if t >= max_steps:
            raise NotConvergedError(max_steps)
        p = PT @ p
        t += 1
        trace.append(tv_distance(p, pi))
    return MixingReport(start=start, epsilon=epsilon, t_mix=t,
                        tv_trace=tuple(trace), deviations=np.abs(p - pi))


def mixing_time(P, start: int, pi, epsilon: float,
                max_steps: int = 200_000) -> int:
    """Minimal t with TV(p(start, t), pi) <= epsilon."""
    return mixing_report(P, start, pi, epsilon, max_steps).t_mix


def mixing_times_from(P, pi, epsilon: float, starts,
                      max_steps: int = 200_000) -> dict:
    """Exact per-start mixing times (one sparse transpose shared)."""
    pi = np.asarray(pi, dtype=float)
    PT = _as_csr_t(P)
    out = {}
    n = pi.shape[0]
    for start in starts:
        p = np.zeros(n)
        p[start] = 1.0
        t = 0
        while tv_distance(p, pi) > epsilon:
            if t >= max_steps:
                raise NotConvergedError(max_steps)
            p = PT @ p
            t += 1
        out[start] = t
    return out


@dataclass
class ErgodicityGraphReport:
    irreducible: bool
    aperiodic: bool
    start_independent: bool
    missing_self_loops: list
    max_pairwise_tv: float

    @property
    def ok(self) -> bool:
        return self.irreducible and self.aperiodic and self.start_independent


def check_irreducible_aperiodic(graph: TransformationGraph,
                                tol: float = 1e-12) -> ErgodicityGraphReport:
    """Traversal-based ergodicity check plus 3-start power-iteration agreement."""
    n = len(graph)
    irreducible = (_pattern_connected(graph.neighbors, n)
                   and _pattern_connected(graph.neighbors, n, reverse=True))
    missing = [i for i, nbrs in enumerate(graph.neighbors) if nbrs.get(i, 0.0) <= 0.0]
    aperiodic = len(missing) < n  # one self-loop in a strongly connected chain
    max_tv = float("nan")
    start_independent = False
    if irreducible and aperiodic:
        P = transition_matrix(graph)
        PT = np.ascontiguousarray(P.T)
        starts = sorted({0, n // 2, n - 1})
        results = []
        for s in starts:
            p = np.zeros(n)
            p[s] = 1.0
            for _ in range(1_000_000):
                nxt = PT @ p
                if tv_distance(nxt, p) <= tol:
                    p = nxt
                    break
                p = nxt
            results.append(p)
        max_tv = max(tv_distance(a, b) for i, a in enumerate(results)
                     for b in results[i + 1:]) if len(results) > 1 else 0.0
        start_independent = max_tv <= 1e-8
    return ErgodicityGraphReport(irreducible, aperiodic, start_independent,
                                 missing, max_tv)


@dataclass
class PartitionReport:
    cells: list           # list of frozensets of state keys
    assignment: list      # seed index -> cell index
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def check_partition(seeds, rules: RuleSet, cap: int) -> PartitionReport:
    """Each pair of seed spaces must be identical or disjoint."""
    spaces = []
    for seed in seeds:
        progs, complete = reachable_states(seed, rules, cap)
        if not complete:
            raise CapExceededError(cap)
        spaces.append(frozenset(p.state() for p in progs))
    cells: list = []
    assignment = []
    violations = []
    for idx, space in enumerate(spaces):
        placed = None
        for ci, cell in enumerate(cells):
            if space == cell:
                placed = ci
            elif space & cell:
                violations.append(
                    f"seed {idx} space overlaps cell {ci} without being equal")
        if placed is None:
            cells.append(space)
            placed = len(cells) - 1
        assignment.append(placed)
    return PartitionReport(cells, assignment, violations)


# --- canonical paths and congestion ---------------------------------------------

@dataclass
class CongestionReport:
    rho: float
    applicable: bool
    n_paths: int
    max_path_len: int
    pi: np.ndarray
    receptor_count: int
    dofs: list
    token_count: int
    alpha: float
    beta: float
    paths: Optional[dict] = field(default=None, repr=False)

    def bound(self, epsilon: float, start: int) -> float:
        """Mixing-time bound 2*rho*(2 ln(1/eps) + ln(1/pi_start))."""
        if not self.applicable:
            raise TooLargeError("bound not applicable (single state)")
        return 2.0 * self.rho * (2.0 * math.log(1.0 / epsilon)
                                 + math.log(1.0 / float(self.pi[start])))


def _canonical_steps(src, dst, cfg):
    """Deterministic shortest receptor-by-receptor edit sequence.

    Queue order: comment slots, dead slots, then variables.  Filled-to-filled
    slot changes take a delete + add; variable renaming processes indices in
    order, evicting a blocking holder to the smallest spare name first.
    """
    states = []
    names, comments, deads = list(src[0]), list(src[1]), list(src[2])
    t_names, t_comments, t_deads = dst

    def snap():
        states.append((tuple(names), tuple(comments), tuple(deads)))

    for k in range(len(comments)):
        if comments[k] != t_comments[k]:
            if comments[k] is not None and t_comments[k] is not None:
                comments[k] = None
                snap()
            comments[k] = t_comments[k]
            snap()
    for k in range(len(deads)):
        if deads[k] != t_deads[k]:
            if deads[k] is not None and t_deads[k] is not None:
                deads[k] = None
                snap()
            deads[k] = t_deads[k]
            snap()
    pool = list(cfg.identifiers)
    for i in range(len(names)):
        if names[i] == t_names[i]:
            continue
        target = t_names[i]
        if target in names:
            # Move the holder out of the way: straight to its own target when
            # that is free, otherwise (a naming cycle) to the smallest spare.
            holder = names.index(target)
            t_holder = t_names[holder]
            if t_holder not in names:
                names[holder] = t_holder
            else:
                names[holder] = next(nm for nm in pool if nm not in names)
            snap()
        names[i] = target
        snap()
    return states


def canonical_paths_and_congestion(graph: TransformationGraph, pi,
                                   P: Optional[np.ndarray] = None,
                                   keep_paths_limit: int = 200) -> CongestionReport:
    """One canonical path per ordered state pair; congestion by max edge load."""
    n = len(graph)
    if n > 5000:
        raise TooLargeError(f"|V| = {n} exceeds the 5000-state cost guard")
    pi = np.asarray(pi, dtype=float)
    profile = graph.receptor_profile()
    cfg = graph.rules.config
    mean_lambda = float(np.mean(graph.degrees))
    alpha = mean_lambda / max(1, profile["receptor_count"])
    beta = profile["receptor_count"] / profile["token_count"]

    if n == 1:
        return CongestionReport(
            rho=0.0, applicable=False, n_paths=0, max_path_len=0, pi=pi,
            receptor_count=profile["receptor_count"], dofs=profile["dofs"],
            token_count=profile["token_count"], alpha=alpha, beta=beta)

    keys = [p.state() for p in graph.states]
    index = graph.index
    loads: dict = {}
    keep = {} if n <= keep_paths_limit else None
    max_len = 0
    n_paths = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            steps = _canonical_steps(keys[i], keys[j], cfg)
            n_paths += 1
            length = len(steps)
            max_len = max(max_len, length)
            weight = pi[i] * pi[j] * length
            prev = i
            path_idx = [i]
            for state in steps:
                cur = index[state]
                loads[(prev, cur)] = loads.get((prev, cur), 0.0) + weight
                path_idx.append(cur)
                prev = cur
            if keep is not None:
                keep[(i, j)] = tuple(path_idx)

    rho = 0.0
    for (a, b), load in loads.items():
        w = graph.neighbors[a].get(b)
        if w is None or w <= 0:
            raise AssertionError(f"canonical path uses missing edge {(a, b)}")
        rho = max(rho, load / (pi[a] * w))
    return CongestionReport(
        rho=rho, applicable=True, n_paths=n_paths, max_path_len=max_len, pi=pi,
        receptor_count=profile["receptor_count"], dofs=profile["dofs"],
        token_count=profile["token_count"], alpha=alpha, beta=beta, paths=keep)


def graph_to_json_file(graph: TransformationGraph, path):
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh)


def build_graph_from_edges(n: int, edges, degrees=None,
                           rules: Optional[RuleSet] = None) -> TransformationGraph:
    """Synthetic graph for tests: explicit edge list [(i, j, w), ...]."""
    neighbors = [dict() for _ in range(n)]
    for i, j, w in edges:
        neighbors[i][j] = neighbors[i].get(j, 0.0) + w
    degs = degrees if degrees is not None else [len(nb) for nb in neighbors]
    states = [_StubState(i) for i in range(n)]
    graph = TransformationGraph.__new__(TransformationGraph)
    graph.states = states
    graph.neighbors = neighbors
    graph.degrees = list(degs)
    graph.rules = rules if rules is not None else rules_mod.standard_ruleset()
    graph.seed_index = 0
    graph.index = {s.state(): i for i, s in enumerate(states)}
    return graph


class _StubState:
    """Minimal stand-in for Program in synthetic test graphs."""

    def __init__(self, i):
        self.i = i
        self.var_names = ()
        self.comment_state = ()
        self.dead_state = ()
        self.tokens = (0,)

    def state(self):
        return ("stub", self.i)
