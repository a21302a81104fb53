"""Experiment orchestration: corpora, attacks, detection tables, and the
impossibility / distribution-consistency experiments.

Everything is a pure function of (config, master seed): sample keys,
generation streams and walk streams are all derived from the master seed, so
re-running a command reproduces its outputs byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from . import chain, rules as rules_mod, stats
from .errors import CapExceededError, ConfigError, NotErgodicError, SpaceTooSmallError
from .minilang import Program, parse, pass_at_1, run_test_suite
from .model import generate
from .rng import RngState
from .rules import (RuleConfig, RuleSet, build_equivalent_space_sample,
                    check_ergodicity, normalize, random_walk)
from .tasks import GenProfile, TASK_IDS, build_task, build_template, template_source
from .watermark import (DetectionResult, Key, SchemeParams, detect,
                        watermarked_generate)


@dataclass(frozen=True)
class ExperimentConfig:
    tasks: tuple = TASK_IDS
    schemes: tuple = (SchemeParams("greenred", 5, 0.25, 4.0),)
    profile: GenProfile = GenProfile()
    compact: bool = False
    rule_kinds: tuple = rules_mod.RULE_KINDS
    attack_t: object = "auto"       # "auto" or a fixed step count
    epsilon: float = 0.01           # mixing tolerance for auto attack length
    trials: int = 200
    epsilon_pos: float = 0.05
    master_seed: int = 20240901
    space_cap: int = 20000
    space_n: int = 30               # members per equivalent-space sample
    denorm_mean: float = 8.0        # de-normalizer walk length mean

    def validate(self) -> "ExperimentConfig":
        for tid in self.tasks:
            if tid not in TASK_IDS:
                raise ConfigError(f"unknown task {tid!r}")
        if not self.schemes:
            raise ConfigError("at least one scheme cell required")
        for s in self.schemes:
            s.validate()
        if not (isinstance(self.attack_t, int) and self.attack_t >= 0
                or self.attack_t == "auto"):
            raise ConfigError("attack_t must be 'auto' or a nonnegative int")
        if not 0.0 < self.epsilon < 1.0 or not 0.0 < self.epsilon_pos < 1.0:
            raise ConfigError("epsilon and epsilon_pos must be in (0,1)")
        if self.trials < 0 or self.space_n < 1 or self.space_cap < 1:
            raise ConfigError("trials/space_n/space_cap out of range")
        return self

    def rule_set(self) -> RuleSet:
        return RuleSet(self.rule_kinds, RuleConfig.from_profile(self.profile))

    def registry(self) -> dict:
        out = {}
        for tid in self.tasks:
            task = build_task(tid, self.compact)
            template = build_template(
                tid, template_source(tid, self.compact), self.profile)
            out[tid] = (task, template)
        return out


def config_to_json(config: ExperimentConfig) -> dict:
    return {
        "tasks": list(config.tasks),
        "schemes": [vars(s) for s in config.schemes],
        "profile": vars(config.profile),
        "compact": config.compact,
        "rules": list(config.rule_kinds),
        "attack_t": config.attack_t,
        "epsilon": config.epsilon,
        "trials": config.trials,
        "epsilon_pos": config.epsilon_pos,
        "master_seed": config.master_seed,
        "space_cap": config.space_cap,
        "space_n": config.space_n,
        "denorm_mean": config.denorm_mean,
    }


def config_from_json(obj: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            tasks=tuple(obj.get("tasks", TASK_IDS)),
            schemes=tuple(SchemeParams(**s) for s in obj["schemes"]),
            profile=GenProfile(**obj.get("profile", {})),
            compact=obj.get("compact", False),
            rule_kinds=tuple(obj.get("rules", rules_mod.RULE_KINDS)),
            attack_t=obj.get("attack_t", "auto"),
            epsilon=obj.get("epsilon", 0.01),
            trials=obj["trials"],
            epsilon_pos=obj.get("epsilon_pos", 0.05),
            master_seed=obj.get("master_seed", 20240901),
            space_cap=obj.get("space_cap", 20000),
            space_n=obj.get("space_n", 30),
            denorm_mean=obj.get("denorm_mean", 8.0),
        ).validate()
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return config_from_json(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# --- corpora ------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    kind: str        # "wm" | "null" | "attacked"
    cell: int
    task_id: str
    trial: int
    key: int
    tokens: tuple
    t_steps: int = 0

    def program(self) -> Program:
        return parse(self.tokens)


CORPUS_FIELDS = ("kind", "cell", "task_id", "trial", "key", "t_steps",
                 "scheme", "n_gram", "gamma", "delta", "tau", "rounds", "tokens")


def _master(config: ExperimentConfig) -> RngState:
    return RngState(config.master_seed)


def generate_corpora(config: ExperimentConfig):
    """Watermarked + unwatermarked corpora over the scheme grid."""
    config.validate()
    registry = config.registry()
    master = _master(config)
    wm, null = [], []
    for cell, params in enumerate(config.schemes):
        for tid in config.tasks:
            task, template = registry[tid]
            for trial in range(config.trials):
                key = Key(master.derive("key", cell, tid, trial).next_u64())
                prog = watermarked_generate(
                    template, params, key, master.derive("gen", cell, tid, trial))
                wm.append(Sample("wm", cell, tid, trial, key.value, prog.tokens))
                nkey = Key(master.derive("nullkey", cell, tid, trial).next_u64())
                nprog = generate(template, master.derive("nullgen", cell, tid, trial))
                null.append(Sample("null", cell, tid, trial, nkey.value,
                                   nprog.tokens))
    return wm, null


@dataclass
class SpaceInfo:
    """Per-task enumerated space with exact per-start mixing times."""

    graph: chain.TransformationGraph
    pi: np.ndarray
    mixing: dict          # epsilon -> {start index -> t_c}

    def t_for(self, program: Program, epsilon: float) -> int:
        start = self.graph.state_index(program)
        return self.mixing[epsilon][start]


def enumerate_task_space(config: ExperimentConfig, task_id: str,
                         epsilons=(0.01,), starts_of_interest=None) -> SpaceInfo:
    """One task's enumerated space plus per-start mixing times."""
    _, template = config.registry()[task_id]
    ruleset = config.rule_set()
    seed = normalize(generate(template, _master(config).derive("seed", task_id)))
    graph = chain.enumerate_space(seed, ruleset, config.space_cap)
    pi = chain.degree_stationary(graph)
    P = chain.transition_matrix(graph)
    starts = (range(len(graph)) if starts_of_interest is None
              else sorted({graph.state_index(p) for p in starts_of_interest
                           if p.state() in graph.index}))
    mixing = {eps: chain.mixing_times_from(P, pi, eps, starts)
              for eps in epsilons}
    return SpaceInfo(graph, pi, mixing)


def enumerate_task_spaces(config: ExperimentConfig, epsilons=(0.01,),
                          starts_of_interest=None) -> dict:
    return {tid: enumerate_task_space(config, tid, epsilons, starts_of_interest)
            for tid in config.tasks}


def attack_corpus(config: ExperimentConfig, corpus, spaces=None):
    """Random-walk every sample; records the step count actually used.

    With ``attack_t == "auto"`` every sample in an enumerable space walks for
    its own exact mixing time t_c(epsilon); samples of non-enumerable spaces
    walk 4x the largest enumerable mixing time (conservative surrogate).
    """
    config.validate()
    ruleset = config.rule_set()
    master = _master(config)
    surrogate_t = None
    if config.attack_t == "auto" and spaces is None:
        by_task: dict = {}
        for s in corpus:
            by_task.setdefault(s.task_id, []).append(s.program())
        sub = replace(config, tasks=tuple(sorted(by_task)))
        spaces = {}
        failed = []
        for tid in sub.tasks:
            try:
                spaces[tid] = enumerate_task_space(
                    sub, tid, epsilons=(config.epsilon,),
                    starts_of_interest=by_task[tid])
            except CapExceededError:
                failed.append(tid)
        if failed:
            if not spaces:
                raise CapExceededError(config.space_cap)
            surrogate_t = 4 * max(max(info.mixing[config.epsilon].values())
                                  for info in spaces.values())

    out = []
    for s in corpus:
        if config.attack_t == "auto":
            info = spaces.get(s.task_id)
            if info is not None:
                t = info.t_for(s.program(), config.epsilon)
            else:
                t = surrogate_t
        else:
            t = config.attack_t
        walked = random_walk(s.program(), ruleset, t,
                             master.derive("walk", s.cell, s.task_id, s.trial))
        out.append(replace(s, kind="attacked", tokens=walked.tokens, t_steps=t))
    return out


def corpus_pass_at_1(config: ExperimentConfig, corpus) -> float:
    registry = config.registry()
    return pass_at_1([run_test_suite(registry[s.task_id][0], s.program())
                      for s in corpus])


# --- detection ------------------------------------------------------------------

@dataclass(frozen=True)
class DetectRow:
    task_id: str
    scheme: str
    cell: int
    kind: str
    trial: int
    z: float
    p: float
    bit: int
    scored_tokens: int


def detect_corpus(config: ExperimentConfig, corpus, threshold=None) -> list:
    """Per-sample detection rows under each sample's own recorded key."""
    registry = config.registry()
    rows = []
    for s in corpus:
        params = config.schemes[s.cell]
        template = registry[s.task_id][1]
        kwargs = {"model_ref": template} if params.scheme == "sweet" else {}
        if threshold is not None:
            kwargs["threshold"] = threshold
        res: DetectionResult = detect(s.tokens, params, Key(s.key), **kwargs)
        rows.append(DetectRow(s.task_id, params.scheme, s.cell, s.kind, s.trial,
                              res.z, res.p, res.bit, res.scored_tokens))
    return rows


def auroc_by_cell(rows) -> dict:
    """(cell, kind) -> AUROC of the z sample against the N(0,1) null."""
    buckets: dict = {}
    for r in rows:
        buckets.setdefault((r.cell, r.kind), []).append(r.z)
    return {k: stats.auroc_vs_null(v) for k, v in sorted(buckets.items())}


# --- impossibility experiment -----------------------------------------------------

@dataclass
class ImpossibilityReport:
    epsilon_pos_target: float
    epsilon: float
    threshold: float
    null_rate: float
    before_detect_rate: float
    afterward_detect_rate: float
    afterward_fnr: float
    target_fnr_main: float          # 1 - epsilon_pos
    target_fnr_lower: float         # 1 - epsilon - epsilon_pos
    ci99: float
    trials: int
    lower_bound_ok: bool
    main_band_ok: bool
    consistency_flag: str
    r_masses: dict                  # task -> share of watermarked samples
    per_space_rates: dict           # task -> afterward detect rate
    detect_rate_trace: dict         # t label -> detect rate
    attack_steps: dict              # task -> max steps used


def calibrate_empirical_threshold(null_zs, epsilon_pos: float) -> float:
    """Threshold over the empirical null with rate closest to epsilon_pos."""
    zs = np.sort(np.asarray(null_zs, dtype=float))
    n = zs.size
    candidates = np.unique(zs)
    best_t, best_gap = float("inf"), abs(0.0 - epsilon_pos)
    for v in candidates:
        rate = float(np.mean(zs >= v))
        gap = abs(rate - epsilon_pos)
        if gap < best_gap - 1e-15:
            best_t, best_gap = float(v), gap
    return best_t


def run_impossibility(config: ExperimentConfig) -> ImpossibilityReport:
    """Desk-scale check of the attacked-FNR theorems.

    Calibrates the decision threshold to the target false-positive rate on an
    unwatermarked corpus, walks every watermarked sample for its own exact
    mixing time, and compares the afterward detect rate to the theorem bands.
    """
    config.validate()
    ruleset = config.rule_set()
    registry = config.registry()
    probes = []
    for tid in config.tasks:
        prog = generate(registry[tid][1], _master(config).derive("probe", tid))
        probes += [prog, normalize(prog)]
    erg = check_ergodicity(ruleset, probes)
    if not erg.ok:
        raise NotErgodicError("; ".join(erg.violations[:3]))

    wm, null = generate_corpora(config)
    eps = config.epsilon
    spaces = enumerate_task_spaces(
        config, epsilons=(eps, 0.1),
        starts_of_interest=[s.program() for s in wm])

    null_rows = detect_corpus(config, null)
    threshold = calibrate_empirical_threshold([r.z for r in null_rows],
                                              config.epsilon_pos)
    null_rate = float(np.mean([r.z >= threshold for r in null_rows]))

    master = _master(config)
    degenerate = all(len(spaces[tid].graph) == 1 for tid in config.tasks)
    checkpoints = {"t=0": [], "t=tc(0.1)": [], "t=tc(0.01)": []}
    per_space_bits: dict = {tid: [] for tid in config.tasks}
    steps_used: dict = {tid: 0 for tid in config.tasks}
    for s in wm:
        prog = s.program()
        info = spaces[s.task_id]
        t_full = info.t_for(prog, eps)
        t_half = info.mixing[0.1][info.graph.state_index(prog)]
        steps_used[s.task_id] = max(steps_used[s.task_id], t_full)
        rng = master.derive("attackwalk", s.cell, s.task_id, s.trial)
        params = config.schemes[s.cell]
        template = registry[s.task_id][1]
        kwargs = {"model_ref": template} if params.scheme == "sweet" else {}

        def bit_of(p: Program) -> int:
            return int(detect(p.tokens, params, Key(s.key), **kwargs).z >= threshold)

        checkpoints["t=0"].append(bit_of(prog))
        mid = random_walk(prog, ruleset, t_half, rng)
        checkpoints["t=tc(0.1)"].append(bit_of(mid))
        final = random_walk(mid, ruleset, max(0, t_full - t_half), rng)
        bit = bit_of(final)
        checkpoints["t=tc(0.01)"].append(bit)
        per_space_bits[s.task_id].append(bit)

    after_bits = [b for tid in config.tasks for b in per_space_bits[tid]]
    after_rate = float(np.mean(after_bits))
    fnr = 1.0 - after_rate
    n = len(after_bits)
    ci = stats.binomial_halfwidth(max(after_rate, config.epsilon_pos), n, 0.99)
    lower_ok = fnr >= 1.0 - eps - config.epsilon_pos - ci
    main_ok = abs(fnr - (1.0 - config.epsilon_pos)) <= ci + eps
    if degenerate:
        flag = ("distribution consistency violated: rule set induces "
                "single-state spaces (no disturbance)")
    elif lower_ok and main_ok:
        flag = "ok"
    else:
        flag = "afterward rate outside theorem bands"
    return ImpossibilityReport(
        epsilon_pos_target=config.epsilon_pos,
        epsilon=eps,
        threshold=threshold,
        null_rate=null_rate,
        before_detect_rate=float(np.mean(checkpoints["t=0"])),
        afterward_detect_rate=after_rate,
        afterward_fnr=fnr,
        target_fnr_main=1.0 - config.epsilon_pos,
        target_fnr_lower=1.0 - eps - config.epsilon_pos,
        ci99=ci,
        trials=n,
        lower_bound_ok=lower_ok,
        main_band_ok=main_ok,
        consistency_flag=flag,
        r_masses={tid: len(per_space_bits[tid]) / n for tid in config.tasks},
        per_space_rates={tid: float(np.mean(per_space_bits[tid]))
                         for tid in config.tasks},
        detect_rate_trace={k: float(np.mean(v)) for k, v in checkpoints.items()},
        attack_steps=steps_used,
    )


# --- distribution-consistency experiment ---------------------------------------------

@dataclass
class ConsistencyReport:
    samples: int
    space_n: int
    too_small: int            # spaces sampled with duplicates (tiny spaces)
    acceptance: dict          # significance level -> acceptance fraction
    rejection: dict           # significance level -> rejection fraction
    a_squared: list


def run_consistency(config: ExperimentConfig) -> ConsistencyReport:
    """AD-test member z-scores of each watermarked sample's equivalent space."""
    config.validate()
    ruleset = config.rule_set()
    registry = config.registry()
    master = _master(config)
    params = config.schemes[0]
    results = []
    too_small = 0
    for tid in config.tasks:
        task, template = registry[tid]
        kwargs = {"model_ref": template} if params.scheme == "sweet" else {}
        for trial in range(config.trials):
            key = Key(master.derive("ckey", tid, trial).next_u64())
            prog = watermarked_generate(template, params, key,
                                        master.derive("cgen", tid, trial))
            rng = master.derive("cspace", tid, trial)
            try:
                members = build_equivalent_space_sample(
                    prog, config.space_n, rng, ruleset,
                    mean_steps=config.denorm_mean)
            except SpaceTooSmallError:
                too_small += 1
                canonical = normalize(prog)
                members = [rules_mod.de_normalize(canonical, rng, ruleset,
                                                  config.denorm_mean)
                           for _ in range(config.space_n)]
            zs = [detect(m.tokens, params, key, **kwargs).z for m in members]
            results.append(stats.anderson_darling(zs))
    levels = sorted(stats.AD_CRITICAL)
    acceptance = {lvl: float(np.mean([r.decisions[lvl] == "accept" for r in results]))
                  for lvl in levels}
    return ConsistencyReport(
        samples=len(results),
        space_n=config.space_n,
        too_small=too_small,
        acceptance=acceptance,
        rejection={lvl: 1.0 - acc for lvl, acc in acceptance.items()},
        a_squared=[r.a_squared for r in results],
    )


# --- persistence ------------------------------------------------------------------

def save_corpus(config: ExperimentConfig, corpus, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CORPUS_FIELDS)
        for s in corpus:
            params = config.schemes[s.cell]
            w.writerow([s.kind, s.cell, s.task_id, s.trial, f"{s.key:016x}",
                        s.t_steps, params.scheme, params.n_gram, params.gamma,
                        params.delta, params.tau, params.rounds,
                        " ".join(map(str, s.tokens))])


def load_corpus(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(Sample(
                kind=row["kind"], cell=int(row["cell"]), task_id=row["task_id"],
                trial=int(row["trial"]), key=int(row["key"], 16),
                tokens=tuple(int(t) for t in row["tokens"].split()),
                t_steps=int(row["t_steps"])))
    return out


DETECT_FIELDS = ("task_id", "scheme", "cell", "kind", "trial",
                 "z", "p", "bit", "scored_tokens")


def save_detection(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DETECT_FIELDS)
        for r in sorted(rows, key=lambda r: (r.cell, r.kind, r.task_id, r.trial)):
            w.writerow([r.task_id, r.scheme, r.cell, r.kind, r.trial,
                        repr(r.z), repr(r.p), r.bit, r.scored_tokens])


def load_detection(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(DetectRow(row["task_id"], row["scheme"], int(row["cell"]),
                                 row["kind"], int(row["trial"]), float(row["z"]),
                                 float(row["p"]), int(row["bit"]),
                                 int(row["scored_tokens"])))
    return out


def summarize_results(results_dir) -> dict:
    """Aggregate detection tables in a directory into the per-cell summary."""
    cells: dict = {}
    for name in sorted(os.listdir(results_dir)):
        if not (name.startswith("detect_") and name.endswith(".csv")):
            continue
        for r in load_detection(os.path.join(results_dir, name)):
            cell = cells.setdefault((r.scheme, r.cell), {})
            cell.setdefault(r.kind, []).append(r.z)
    table = []
    n_after = 0
    n_outside = 0
    for (scheme, cell), kinds in sorted(cells.items()):
        entry = {"scheme": scheme, "cell": cell}
        for kind, zs in sorted(kinds.items()):
            entry[f"auroc_{kind}"] = stats.auroc_vs_null(zs)
            entry[f"n_{kind}"] = len(zs)
        if "auroc_attacked" in entry:
            n_after += 1
            if not 0.4 < entry["auroc_attacked"] < 0.6:
                n_outside += 1
        table.append(entry)
    return {
        "cells": table,
        "cells_with_attack": n_after,
        "attacked_outside_band": n_outside,
        "attacked_outside_fraction": (n_outside / n_after) if n_after else 0.0,
    }


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def summary_csv_bytes(summary: dict) -> bytes:
    buf = io.StringIO()
    keys = sorted({k for row in summary["cells"] for k in row})
    w = csv.writer(buf)
    w.writerow(keys)
    for row in summary["cells"]:
        w.writerow([repr(row[k]) if isinstance(row.get(k), float) else row.get(k, "")
                    for k in keys])
    return buf.getvalue().encode()
