"""Equivalent-transformation rules and the random-walk attacker.

A rule derives concrete actions from a program's receptor state; applying an
action touches exactly one receptor (a comment slot, a dead-code slot, or a
variable's name).  The standard set

    empty, rename_var, add_comment, del_comment, add_dead, del_dead

contains the no-op and an inverse for every rule, so one-step reachability is
symmetric and the induced walk is ergodic on each equivalent space.  Rules
never see keys, hashes, or any N-gram statistic: they receive only the
Program.

``random_step`` draws uniformly over the pooled action set of all rules.  The
hot path counts actions per rule and materializes only the chosen one; the
indexing order is identical to ``derive_actions``, so the law is exactly
uniform-over-the-pool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .errors import (ConfigError, IllegalActionError, NotCanonicalError,
                     NotConvergedError, SpaceTooSmallError)
from .minilang import Program, VOCAB
from .rng import RngState

RULE_KINDS = ("empty", "rename_var", "add_comment", "del_comment",
              "add_dead", "del_dead")

_INVERSE = {"empty": "empty", "rename_var": "rename_var",
            "add_comment": "del_comment", "del_comment": "add_comment",
            "add_dead": "del_dead", "del_dead": "add_dead"}


@dataclass(frozen=True)
class RuleConfig:
    """Pool sizes the rules draw replacement states from."""

    identifier_pool_size: int = 16
    comment_word_pool_size: int = 16
    snippet_pool_size: int = 8

    def __post_init__(self):
        if not (1 <= self.identifier_pool_size <= len(VOCAB.identifier_ids)):
            raise ConfigError("identifier pool size out of range")
        if not (1 <= self.comment_word_pool_size <= len(VOCAB.word_ids)):
            raise ConfigError("comment word pool size out of range")
        if not (1 <= self.snippet_pool_size <= len(VOCAB.snippet_ids)):
            raise ConfigError("snippet pool size out of range")

    @property
    def identifiers(self):
        return VOCAB.identifier_ids[: self.identifier_pool_size]

    @property
    def words(self):
        return VOCAB.word_ids[: self.comment_word_pool_size]

    @property
    def snippets(self):
        return VOCAB.snippet_ids[: self.snippet_pool_size]

    @staticmethod
    def from_profile(profile) -> "RuleConfig":
        return RuleConfig(identifier_pool_size=profile.id_pool,
                          comment_word_pool_size=profile.word_pool,
                          snippet_pool_size=profile.snippet_pool)


@dataclass(frozen=True)
class Rule:
    kind: str

    @property
    def id(self) -> str:
        return self.kind

    @property
    def inverse_id(self) -> str:
        return _INVERSE[self.kind]


@dataclass(frozen=True)
class Action:
    rule_id: str
    receptor: tuple  # ("none",) | ("var", i) | ("comment", slot) | ("dead", slot)
    payload: Optional[int] = None


class RuleSet:
    """Ordered rule list plus the pools actions draw from."""

    def __init__(self, kinds, config: RuleConfig = RuleConfig()):
        kinds = tuple(kinds)
        for k in kinds:
            if k not in RULE_KINDS:
                raise ConfigError(f"unknown rule kind {k!r}")
        if len(set(kinds)) != len(kinds):
            raise ConfigError("duplicate rule kinds")
        self.rules = tuple(Rule(k) for k in kinds)
        self.kinds = frozenset(kinds)
        self.config = config

    def __iter__(self):
        return iter(self.rules)

    def has(self, kind: str) -> bool:
        return kind in self.kinds

    def closed_under_inverses(self) -> bool:
        return "empty" in self.kinds and all(
            _INVERSE[k] in self.kinds for k in self.kinds)


def standard_ruleset(config: RuleConfig = RuleConfig()) -> RuleSet:
    return RuleSet(RULE_KINDS, config)


def degenerate_ruleset(config: RuleConfig = RuleConfig()) -> RuleSet:
    return RuleSet(("empty",), config)


def ruleset_to_json(rules: RuleSet) -> dict:
    return {
        "rules": [r.kind for r in rules],
        "identifier_pool_size": rules.config.identifier_pool_size,
        "comment_word_pool_size": rules.config.comment_word_pool_size,
        "snippet_pool_size": rules.config.snippet_pool_size,
    }


def ruleset_from_json(obj: dict) -> RuleSet:
    cfg = RuleConfig(obj["identifier_pool_size"], obj["comment_word_pool_size"],
                     obj["snippet_pool_size"])
    return RuleSet(tuple(obj["rules"]), cfg)


# --- action derivation ---------------------------------------------------------

def _free_names(program: Program, config: RuleConfig) -> list:
    used = set(program.var_names)
    return [nm for nm in config.identifiers if nm not in used]


def _empty_slots(state) -> list:
    return [i for i, s in enumerate(state) if s is None]


def _filled_slots(state) -> list:
    return [i for i, s in enumerate(state) if s is not None]


def action_count(rule: Rule, program: Program, config: RuleConfig) -> int:
    kind = rule.kind
    if kind == "empty":
        return 1
    if kind == "rename_var":
        return len(program.var_names) * len(_free_names(program, config))
    if kind == "add_comment":
        return len(_empty_slots(program.comment_state)) * config.comment_word_pool_size
    if kind == "del_comment":
        return len(_filled_slots(program.comment_state))
    if kind == "add_dead":
        return len(_empty_slots(program.dead_state)) * config.snippet_pool_size
    if kind == "del_dead":
        return len(_filled_slots(program.dead_state))
    raise ConfigError(f"unknown rule kind {kind!r}")


def apply_indexed(rule: Rule, program: Program, k: int, config: RuleConfig) -> Program:
    """Apply the k-th action of this rule (derive_actions order)."""
    kind = rule.kind
    if kind == "empty":
        return program
    if kind == "rename_var":
        free = _free_names(program, config)
        var, name = divmod(k, len(free))
        names = list(program.var_names)
        names[var] = free[name]
        return program.replace_state(var_names=tuple(names))
    if kind == "add_comment":
        empty = _empty_slots(program.comment_state)
        slot, word = divmod(k, config.comment_word_pool_size)
        state = list(program.comment_state)
        state[empty[slot]] = config.words[word]
        return program.replace_state(comment_state=tuple(state))
    if kind == "del_comment":
        filled = _filled_slots(program.comment_state)
        state = list(program.comment_state)
        state[filled[k]] = None
        return program.replace_state(comment_state=tuple(state))
    if kind == "add_dead":
        empty = _empty_slots(program.dead_state)
        slot, snip = divmod(k, config.snippet_pool_size)
        state = list(program.dead_state)
        state[empty[slot]] = config.snippets[snip]
        return program.replace_state(dead_state=tuple(state))
    if kind == "del_dead":
        filled = _filled_slots(program.dead_state)
        state = list(program.dead_state)
        state[filled[k]] = None
        return program.replace_state(dead_state=tuple(state))
    raise ConfigError(f"unknown rule kind {kind!r}")


def derive_actions(rule: Rule, program: Program,
                   config: RuleConfig = RuleConfig()) -> list:
    """Every action this rule can perform on the program (may be empty)."""
    kind = rule.kind
    out = []
    if kind == "empty":
        out.append(Action("empty", ("none",)))
    elif kind == "rename_var":
        free = _free_names(program, config)
        for var in range(len(program.var_names)):
            for name in free:
                out.append(Action(kind, ("var", var), name))
    elif kind == "add_comment":
        for slot in _empty_slots(program.comment_state):
            for word in config.words:
                out.append(Action(kind, ("comment", slot), word))
    elif kind == "del_comment":
        for slot in _filled_slots(program.comment_state):
            out.append(Action(kind, ("comment", slot)))
    elif kind == "add_dead":
        for slot in _empty_slots(program.dead_state):
            for snip in config.snippets:
                out.append(Action(kind, ("dead", slot), snip))
    elif kind == "del_dead":
        for slot in _filled_slots(program.dead_state):
            out.append(Action(kind, ("dead", slot)))
    else:
        raise ConfigError(f"unknown rule kind {kind!r}")
    return out


def transform(program: Program, action: Action,
              config: RuleConfig = RuleConfig()) -> Program:
    """Apply one action; rejects actions not currently derivable."""
    kind = action.rule_id
    if kind == "empty":
        if action.receptor != ("none",):
            raise IllegalActionError("empty rule takes no receptor")
        return program
    if kind == "rename_var":
        tag, var = action.receptor
        name = action.payload
        if (tag != "var" or not 0 <= var < len(program.var_names)
                or name not in config.identifiers
                or name in program.var_names):
            raise IllegalActionError(f"illegal rename {action}")
        names = list(program.var_names)
        names[var] = name
        return program.replace_state(var_names=tuple(names))
    if kind in ("add_comment", "del_comment"):
        tag, slot = action.receptor
        if tag != "comment" or not 0 <= slot < len(program.comment_state):
            raise IllegalActionError(f"bad comment receptor {action}")
        state = list(program.comment_state)
        if kind == "add_comment":
            if state[slot] is not None or action.payload not in config.words:
                raise IllegalActionError(f"illegal comment add {action}")
            state[slot] = action.payload
        else:
            if state[slot] is None:
                raise IllegalActionError(f"comment slot {slot} already empty")
            state[slot] = None
        return program.replace_state(comment_state=tuple(state))
    if kind in ("add_dead", "del_dead"):
        tag, slot = action.receptor
        if tag != "dead" or not 0 <= slot < len(program.dead_state):
            raise IllegalActionError(f"bad dead receptor {action}")
        state = list(program.dead_state)
        if kind == "add_dead":
            if state[slot] is not None or action.payload not in config.snippets:
                raise IllegalActionError(f"illegal dead add {action}")
            state[slot] = action.payload
        else:
            if state[slot] is None:
                raise IllegalActionError(f"dead slot {slot} already empty")
            state[slot] = None
        return program.replace_state(dead_state=tuple(state))
    raise IllegalActionError(f"unknown rule {kind!r}")


def total_actions(program: Program, rules: RuleSet) -> int:
    return sum(action_count(r, program, rules.config) for r in rules)


def random_step(program: Program, rules: RuleSet, rng: RngState) -> Program:
    """Uniform draw over the pooled action set of all rules, then apply."""
    counts = [action_count(r, program, rules.config) for r in rules]
    total = sum(counts)
    j = rng.randrange(total)
    for rule, c in zip(rules, counts):
        if j < c:
            return apply_indexed(rule, program, j, rules.config)
        j -= c
    raise AssertionError("unreachable")


def random_walk(program: Program, rules: RuleSet, t: int, rng: RngState) -> Program:
    if t < 0:
        raise ConfigError("walk length must be >= 0")
    for _ in range(t):
        program = random_step(program, rules, rng)
    return program


def successors(program: Program, rules: RuleSet):
    """All one-step results with action multiplicity (enumeration substrate)."""
    out = []
    for rule in rules:
        for k in range(action_count(rule, program, rules.config)):
            out.append(apply_indexed(rule, program, k, rules.config))
    return out


# --- normal forms ---------------------------------------------------------------

def normalize(program: Program) -> Program:
    """Empty every slot and rename variables to the canonical pool prefix."""
    nv = len(program.var_names)
    return program.replace_state(
        var_names=tuple(VOCAB.identifier_ids[:nv]),
        comment_state=(None,) * len(program.comment_state),
        dead_state=(None,) * len(program.dead_state),
    )


def de_normalize(canonical: Program, rng: RngState,
                 rules: Optional[RuleSet] = None, mean_steps: float = 8.0) -> Program:
    """Random member of the canonical program's space (forward walk).

    Applies a geometric(mean ``mean_steps``) number of random transformations;
    the result normalizes back to the input by construction.
    """
    if rules is None:
        rules = standard_ruleset()
    if normalize(canonical) != canonical:
        raise NotCanonicalError("de_normalize needs a canonical program")
    return random_walk(canonical, rules, rng.geometric(mean_steps), rng)


def reachable_states(program: Program, rules: RuleSet, cap: int):
    """Breadth-first closure of one-step transforms, stopping at ``cap``.

    Returns (programs, complete): ``complete`` is False when the cap cut the
    search off.
    """
    seen = {program.state(): program}
    frontier = [program]
    while frontier:
        nxt = []
        for prog in frontier:
            for succ in successors(prog, rules):
                key = succ.state()
                if key not in seen:
                    if len(seen) >= cap:
                        return list(seen.values()), False
                    seen[key] = succ
                    nxt.append(succ)
        frontier = nxt
    return list(seen.values()), True


def build_equivalent_space_sample(seed_program: Program, n: int, rng: RngState,
                                  rules: Optional[RuleSet] = None,
                                  mean_steps: float = 8.0,
                                  max_attempts: Optional[int] = None) -> list:
    """n distinct space members drawn through the de-normalizer."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if rules is None:
        rules = standard_ruleset()
    reach, complete = reachable_states(seed_program, rules, cap=n)
    if complete and len(reach) < n:
        raise SpaceTooSmallError(f"space has {len(reach)} members, {n} requested")
    canonical = normalize(seed_program)
    members: dict = {}
    attempts = 0
    limit = max_attempts if max_attempts is not None else 400 * n
    while len(members) < n:
        if attempts >= limit:
            raise NotConvergedError(limit)
        attempts += 1
        cand = de_normalize(canonical, rng, rules, mean_steps)
        members.setdefault(cand.state(), cand)
    return list(members.values())


# --- ergodicity check -------------------------------------------------------------

@dataclass
class ErgodicityReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def check_ergodicity(rules: RuleSet, probe_programs) -> ErgodicityReport:
    """Verify the empty rule and, action by action, the inverse property."""
    violations = []
    if not rules.has("empty"):
        violations.append("rule set has no empty rule")
    by_id = {r.id: r for r in rules}
    for idx, probe in enumerate(probe_programs):
        for rule in rules:
            inv = by_id.get(rule.inverse_id)
            for action in derive_actions(rule, probe, rules.config):
                after = transform(probe, action, rules.config)
                if inv is None:
                    if after != probe:
                        violations.append(
                            f"probe {idx}: {rule.id} action {action.receptor} "
                            f"has no inverse rule {rule.inverse_id}")
                    continue
                restored = any(
                    transform(after, back, rules.config) == probe
                    for back in derive_actions(inv, after, rules.config))
                if not restored:
                    violations.append(
                        f"probe {idx}: no inverse for {rule.id} "
                        f"action {action.receptor}/{action.payload}")
    return ErgodicityReport(violations)


def save_ruleset(rules: RuleSet, path):
    with open(path, "w") as fh:
        json.dump(ruleset_to_json(rules), fh)


def load_ruleset(path) -> RuleSet:
    with open(path) as fh:
        return ruleset_from_json(json.load(fh))
