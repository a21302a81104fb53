import math
from collections import Counter

import pytest

from wmlab.errors import DistributionError, InvalidPrefixError
from wmlab.minilang import run_test_suite
from wmlab.model import (Dist, base_next_distribution, entropy, generate,
                         generate_tokens, point_mass, template_from_json,
                         template_to_json, uniform)
from wmlab.rng import RngState
from wmlab.tasks import (PROFILE_COMPACT, PROFILE_RICH, build_suite,
                         build_template, max_fixed_run)


def _rich_suite():
    return build_suite(PROFILE_RICH)


def test_entropy_values():
    assert entropy(point_mass(5)) == 0.0
    assert abs(entropy(uniform((1, 2))) - math.log(2)) < 1e-12
    assert abs(entropy(uniform((1, 2, 3, 4))) - math.log(4)) < 1e-9
    mixed = Dist((1, 2, 3), (0.5, 0.25, 0.25))
    assert abs(entropy(mixed) - 1.0397207708399179) < 1e-9


def test_entropy_rejects_bad_weights():
    with pytest.raises(DistributionError):
        entropy(Dist((1, 2), (0.7, 0.7)))
    with pytest.raises(DistributionError):
        entropy(Dist((1, 2), (1.0, 0.0)))


def test_fixed_position_is_point_mass():
    _, tpl = _rich_suite()[0]
    dist = base_next_distribution(tpl, ())
    assert dist.is_point()
    assert entropy(dist) == 0.0


def test_four_way_identifier_choice():
    # sum2 has 4 variables over a 16-name pool: 4-way uniform declarations
    _, tpl = [p for p in _rich_suite() if p[0].id == "sum2"][0]
    first_choice = next(i for i, item in enumerate(tpl.script)
                        if item[0] == "choice")
    prefix = generate_tokens(tpl, RngState(0))[:first_choice]
    dist = base_next_distribution(tpl, prefix)
    assert len(dist.ids) == 4
    assert dist.probs == (0.25, 0.25, 0.25, 0.25)
    assert abs(entropy(dist) - math.log(4)) < 1e-12


def test_invalid_prefix_rejected():
    _, tpl = _rich_suite()[0]
    good = generate_tokens(tpl, RngState(1))
    with pytest.raises(InvalidPrefixError):
        base_next_distribution(tpl, (good[0] + 1,))
    with pytest.raises(InvalidPrefixError):
        base_next_distribution(tpl, good)  # complete emission has no next


def test_ref_positions_follow_declaration():
    _, tpl = _rich_suite()[0]
    toks = generate_tokens(tpl, RngState(2))
    for pos, item in enumerate(tpl.script):
        if item[0] == "ref":
            assert toks[pos] == toks[item[1]]
            dist = base_next_distribution(tpl, toks[:pos])
            assert dist.is_point() and dist.ids[0] == toks[item[1]]


def test_generate_deterministic_and_sound():
    for task, tpl in _rich_suite():
        a = generate(tpl, RngState(99))
        b = generate(tpl, RngState(99))
        assert a == b
        assert run_test_suite(task, a) == 1


def test_generation_soundness_sampled():
    rng = RngState(7)
    for task, tpl in _rich_suite():
        for i in range(25):
            assert run_test_suite(task, generate(tpl, rng.derive(task.id, i))) == 1


def test_choice_frequencies_match_weights():
    _, tpl = [p for p in _rich_suite() if p[0].id == "sum2"][0]
    pos = next(i for i, item in enumerate(tpl.script) if item[0] == "choice")
    cp = tpl.script[pos][1]
    rng = RngState(11)
    counts = Counter(generate_tokens(tpl, rng.derive(i))[pos] for i in range(10000))
    for tok in cp.allowed:
        assert abs(counts[tok] / 10000 - 0.25) < 0.02


def test_prefix_consistency_with_realized_frequencies():
    # base_next_distribution at a comment-slot choice matches generate's law
    _, tpl = _rich_suite()[0]
    pos = [i for i, item in enumerate(tpl.script) if item[0] == "choice"][1]
    prefix = generate_tokens(tpl, RngState(3))[:pos]
    dist = base_next_distribution(tpl, prefix)
    rng = RngState(13)
    counts = Counter()
    n = 20000
    for i in range(n):
        counts[generate_tokens(tpl, rng.derive(i))[pos]] += 1
    for tok, p in zip(dist.ids, dist.probs):
        assert abs(counts[tok] / n - p) < 4 * math.sqrt(p * (1 - p) / n) + 0.003


def test_entropy_profile_matches_positions():
    _, tpl = _rich_suite()[0]
    assert len(tpl.entropy_profile) == tpl.emission_length
    for i, item in enumerate(tpl.script):
        if item[0] == "choice":
            assert tpl.entropy_profile[i] > 0
        else:
            assert tpl.entropy_profile[i] == 0.0


def test_template_json_roundtrip():
    _, tpl = _rich_suite()[2]
    again = template_from_json(template_to_json(tpl))
    assert again.task_id == tpl.task_id
    assert again.script == tpl.script
    assert generate_tokens(again, RngState(5)) == generate_tokens(tpl, RngState(5))


def test_default_templates_have_twelve_choice_points():
    for _, tpl in _rich_suite():
        assert len(tpl.choice_points) >= 12
        assert max_fixed_run(tpl) < 5


def test_completion_counts_positive():
    for _, tpl in build_suite(PROFILE_COMPACT, compact=True):
        assert tpl.completion_count() >= 1
