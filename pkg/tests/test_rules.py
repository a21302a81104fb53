import math
from collections import Counter

import pytest
from scipy.stats import chisquare

from wmlab.errors import (ConfigError, IllegalActionError, NotCanonicalError,
                          SpaceTooSmallError)
from wmlab.minilang import VOCAB, parse_source, run_test_suite
from wmlab.model import generate
from wmlab.rng import RngState
from wmlab.rules import (Action, Rule, RuleConfig, RuleSet, action_count,
                         apply_indexed, build_equivalent_space_sample,
                         check_ergodicity, de_normalize, degenerate_ruleset,
                         derive_actions, normalize, random_step, random_walk,
                         reachable_states, ruleset_from_json, ruleset_to_json,
                         standard_ruleset, successors, total_actions, transform)
from wmlab.tasks import PROFILE_COMPACT, build_suite

FOUR_ACTION_SRC = "fn f ( ) { # note sink _ ; return 0 ; }"
FOUR_ACTION_CFG = RuleConfig(identifier_pool_size=1, comment_word_pool_size=1,
                             snippet_pool_size=2)
FOUR_ACTION_RULES = RuleSet(("empty", "add_comment", "del_comment",
                             "add_dead", "del_dead"), FOUR_ACTION_CFG)


def _compact_pair(idx=6):  # sum2 by default
    return build_suite(PROFILE_COMPACT, compact=True)[idx]


def _compact_rules():
    return standard_ruleset(RuleConfig.from_profile(PROFILE_COMPACT))


def test_empty_rule_yields_single_noop():
    p = parse_source(FOUR_ACTION_SRC)
    acts = derive_actions(Rule("empty"), p, FOUR_ACTION_CFG)
    assert len(acts) == 1
    assert transform(p, acts[0], FOUR_ACTION_CFG) == p


def test_del_comment_with_no_filled_slots():
    p = parse_source("fn f ( ) { # _ return 0 ; }")
    assert derive_actions(Rule("del_comment"), p, FOUR_ACTION_CFG) == []


def test_four_action_config_counts():
    p = parse_source(FOUR_ACTION_SRC)
    counts = [action_count(r, p, FOUR_ACTION_CFG) for r in FOUR_ACTION_RULES]
    assert counts == [1, 0, 1, 2, 0]
    assert total_actions(p, FOUR_ACTION_RULES) == 4
    derived = sum(len(derive_actions(r, p, FOUR_ACTION_CFG))
                  for r in FOUR_ACTION_RULES)
    assert derived == 4


def test_apply_indexed_matches_derive_actions():
    task, tpl = _compact_pair()
    rules = _compact_rules()
    rng = RngState(1)
    for i in range(10):
        p = generate(tpl, rng.derive(i))
        for rule in rules:
            acts = derive_actions(rule, p, rules.config)
            assert len(acts) == action_count(rule, p, rules.config)
            for k, act in enumerate(acts):
                assert apply_indexed(rule, p, k, rules.config) == \
                    transform(p, act, rules.config)


def test_transform_inverse_pair_restores():
    task, tpl = _compact_pair()
    p = generate(tpl, RngState(2))
    cfg = _compact_rules().config
    a_name = p.var_names[0]
    free = [nm for nm in cfg.identifiers if nm not in p.var_names][0]
    fwd = Action("rename_var", ("var", 0), free)
    back = Action("rename_var", ("var", 0), a_name)
    assert transform(transform(p, fwd, cfg), back, cfg) == p


def test_transform_rejects_illegal_actions():
    p = parse_source(FOUR_ACTION_SRC)
    with pytest.raises(IllegalActionError):
        transform(p, Action("add_comment", ("comment", 0), VOCAB.word_ids[0]),
                  FOUR_ACTION_CFG)  # slot already filled
    with pytest.raises(IllegalActionError):
        transform(p, Action("del_dead", ("dead", 0)), FOUR_ACTION_CFG)


def test_transform_preserves_tests_property():
    rng = RngState(3)
    rules = _compact_rules()
    for idx in range(8):
        task, tpl = _compact_pair(idx)
        for i in range(25):
            p = generate(tpl, rng.derive(idx, i))
            for rule in rules:
                n = action_count(rule, p, rules.config)
                if n:
                    q = apply_indexed(rule, p, rng.randrange(n), rules.config)
                    assert run_test_suite(task, q) == 1


def test_random_step_uniform_over_four_actions():
    p = parse_source(FOUR_ACTION_SRC)
    rng = RngState(4)
    counts = Counter(random_step(p, FOUR_ACTION_RULES, rng).state()
                     for _ in range(10000))
    assert len(counts) == 4
    for v in counts.values():
        assert abs(v / 10000 - 0.25) < 0.02


def test_random_step_empty_only():
    p = parse_source(FOUR_ACTION_SRC)
    rng = RngState(5)
    rs = degenerate_ruleset(FOUR_ACTION_CFG)
    assert all(random_step(p, rs, rng) == p for _ in range(20))


def test_random_walk_zero_steps_and_chisquare():
    p = parse_source(FOUR_ACTION_SRC)
    rng = RngState(6)
    assert random_walk(p, FOUR_ACTION_RULES, 0, rng) == p
    with pytest.raises(ConfigError):
        random_walk(p, FOUR_ACTION_RULES, -1, rng)
    single = Counter(random_step(p, FOUR_ACTION_RULES, rng.derive("s", i)).state()
                     for i in range(8000))
    walk1 = Counter(random_walk(p, FOUR_ACTION_RULES, 1, rng.derive("w", i)).state()
                    for i in range(8000))
    keys = sorted(single, key=repr)
    _, pvalue = chisquare([walk1[k] for k in keys], [single[k] for k in keys])
    assert pvalue > 0.01


def test_walk_output_passes_suite():
    rng = RngState(7)
    rules = _compact_rules()
    task, tpl = _compact_pair()
    for i in range(200):
        q = random_walk(generate(tpl, rng.derive(i)), rules, 15, rng.derive(i, 1))
        assert run_test_suite(task, q) == 1


def test_normalize_idempotent_and_class_invariant():
    rng = RngState(8)
    rules = _compact_rules()
    task, tpl = _compact_pair()
    for i in range(100):
        p = generate(tpl, rng.derive(i))
        n = normalize(p)
        assert normalize(n) == n
        for rule in rules:
            cnt = action_count(rule, p, rules.config)
            if cnt:
                q = apply_indexed(rule, p, rng.randrange(cnt), rules.config)
                assert normalize(q) == n


def test_normalize_canonical_names_first_appearance():
    p = parse_source("fn f ( q , z ) { let m = q + z ; return m ; }")
    n = normalize(p)
    assert n.var_names == tuple(VOCAB.identifier_ids[:3])


def test_de_normalize_contract():
    rng = RngState(9)
    rules = _compact_rules()
    task, tpl = _compact_pair()
    canonical = normalize(generate(tpl, RngState(10)))
    for i in range(300):
        m = de_normalize(canonical, rng.derive(i), rules)
        assert normalize(m) == canonical
    with pytest.raises(NotCanonicalError):
        de_normalize(generate(tpl, RngState(11)), rng, rules)


def test_de_normalize_zero_walk_returns_canonical():
    rules = _compact_rules()
    canonical = normalize(generate(_compact_pair()[1], RngState(12)))

    class ZeroGeom(RngState):
        def geometric(self, mean):
            return 0

    assert de_normalize(canonical, ZeroGeom(1), rules) == canonical


def test_de_normalize_distinct_outputs():
    rules = _compact_rules()
    rng = RngState(13)
    canonical = normalize(generate(_compact_pair()[1], RngState(14)))
    outs = [de_normalize(canonical, rng.derive(i), rules).state()
            for i in range(200)]
    distinct = sum(a != b for a, b in zip(outs, outs[1:]))
    assert distinct / len(outs) >= 0.9


def test_space_sample_distinct_and_too_small():
    rules = _compact_rules()
    task, tpl = _compact_pair()
    p = generate(tpl, RngState(15))
    sample = build_equivalent_space_sample(p, 30, RngState(16), rules)
    assert len(sample) == 30
    assert len({m.state() for m in sample}) == 30
    canonical = normalize(p)
    assert all(normalize(m) == canonical for m in sample)

    # 162-state configuration cannot produce 200 members
    p162 = parse_source("fn f ( a , b ) { # _ # _ sink _ ; return a + b ; }")
    cfg162 = RuleConfig(identifier_pool_size=3, comment_word_pool_size=2,
                        snippet_pool_size=2)
    with pytest.raises(SpaceTooSmallError):
        build_equivalent_space_sample(p162, 200, RngState(17),
                                      standard_ruleset(cfg162))
    single = build_equivalent_space_sample(p162, 1, RngState(18),
                                           standard_ruleset(cfg162))
    assert normalize(single[0]) == normalize(p162)


def test_check_ergodicity_default_and_broken():
    rules = _compact_rules()
    rng = RngState(19)
    probes = []
    for idx in (0, 6):
        _, tpl = _compact_pair(idx)
        p = generate(tpl, rng.derive(idx))
        probes += [p, normalize(p)]
    assert check_ergodicity(rules, probes).ok

    missing = RuleSet(("empty", "rename_var", "add_comment", "del_comment",
                       "add_dead"), rules.config)
    rep = check_ergodicity(missing, probes)
    assert any("add_dead" in v for v in rep.violations)

    assert check_ergodicity(degenerate_ruleset(rules.config), probes).ok


def test_ruleset_json_roundtrip():
    rules = _compact_rules()
    again = ruleset_from_json(ruleset_to_json(rules))
    assert [r.kind for r in again] == [r.kind for r in rules]
    assert again.config == rules.config


def test_reversibility_one_step():
    # c' reachable from c in one step iff c reachable from c' in one step
    rules = _compact_rules()
    p = generate(_compact_pair()[1], RngState(20))
    for succ in set(successors(p, rules)):
        assert p in set(successors(succ, rules))


def test_self_loop_everywhere():
    rules = _compact_rules()
    p = generate(_compact_pair()[1], RngState(21))
    states, _ = reachable_states(p, rules, cap=2000)
    for s in states[:50]:
        assert s in set(successors(s, rules))


def test_rules_are_key_blind():
    # walking is a function of (program, rng) only: identical streams give
    # identical outputs regardless of any watermark key used at generation
    rules = _compact_rules()
    p = generate(_compact_pair()[1], RngState(22))
    a = random_walk(p, rules, 40, RngState(23))
    b = random_walk(p, rules, 40, RngState(23))
    assert a == b


def test_inverse_ids():
    assert Rule("add_comment").inverse_id == "del_comment"
    assert Rule("del_dead").inverse_id == "add_dead"
    assert Rule("empty").inverse_id == "empty"
    assert Rule("rename_var").inverse_id == "rename_var"
    assert standard_ruleset().closed_under_inverses()
    assert not RuleSet(("empty", "add_comment")).closed_under_inverses()
