import math
from collections import Counter

import numpy as np
import pytest

from wmlab.errors import (ConfigError, ContextLengthError, EmptyInputError,
                          OutOfRangeError, TooShortError, WrongLengthError)
from wmlab.minilang import VOCAB, run_test_suite
from wmlab.model import Dist, generate, uniform
from wmlab.rng import RngState
from wmlab.stats import auroc_vs_null
from wmlab.tasks import PROFILE_RICH, build_suite
from wmlab.watermark import (DEFAULT_THRESHOLD, Key, SchemeParams,
                             calibrate_threshold, detect, estimate_rates,
                             g_score, green_set, ideal_watermark, is_marked,
                             marked_ratio, prf_seed, random_key, sample_token,
                             synthid_layer_update, watermarked_generate)
from wmlab.watermark import _binomial_z, _is_green


class _StubVocab:
    def __init__(self, n):
        self.n = n

    def __len__(self):
        return self.n


def test_prf_seed_deterministic_and_length_checked():
    key = Key(0xDEADBEEF)
    ctx = (4, 8, 15, 16)
    assert prf_seed(key, ctx) == prf_seed(key, ctx)
    with pytest.raises(ContextLengthError):
        prf_seed(key, (1, 2, 3))
    assert prf_seed(key, (1, 2), n_gram=3) == prf_seed(key, (1, 2), n_gram=3)


def test_prf_seed_collision_scan():
    key = Key(123456789)
    rng = RngState(0)
    seen = {}
    collisions = 0
    for _ in range(10**5):
        ctx = tuple(rng.randrange(len(VOCAB)) for _ in range(4))
        s = prf_seed(key, ctx)
        if s in seen and seen[s] != ctx:
            collisions += 1
        seen[s] = ctx
    assert collisions <= 1


def test_prf_seed_avalanche():
    key = Key(42)
    rng = RngState(1)
    flips = []
    for _ in range(20000):
        ctx = [rng.randrange(len(VOCAB)) for _ in range(4)]
        base = prf_seed(key, ctx)
        pos = rng.randrange(4)
        bit = 1 << rng.randrange(8)
        mutated = list(ctx)
        mutated[pos] ^= bit
        flips.append(bin(base ^ prf_seed(key, mutated)).count("1"))
    mean = sum(flips) / len(flips)
    assert 32 - 6 <= mean <= 32 + 6


def test_green_set_size_and_determinism():
    vocab = _StubVocab(200)
    g = green_set(777, 0.25, vocab)
    assert len(g) == 50
    assert g == green_set(777, 0.25, vocab)
    assert all(0 <= t < 200 for t in g)


def test_green_set_overlap_mean():
    vocab = _StubVocab(200)
    rng = RngState(2)
    overlaps = [len(green_set(rng.next_u64(), 0.25, vocab)
                    & green_set(rng.next_u64(), 0.25, vocab))
                for _ in range(2000)]
    assert abs(np.mean(overlaps) - 12.5) < 0.35


def test_green_membership_frequency_half():
    rng = RngState(3)
    token = 17
    hits = sum(token in green_set(rng.next_u64(), 0.5) for _ in range(10000))
    assert abs(hits / 10000 - 0.5) < 0.015


def test_is_green_matches_green_set():
    rng = RngState(4)
    for _ in range(40):
        seed = rng.next_u64()
        for gamma in (0.1, 0.25, 0.5):
            gs = green_set(seed, gamma)
            for tok in (0, 5, 100, 271):
                assert _is_green(seed, tok, gamma, VOCAB) == (tok in gs)


def test_g_score_deterministic_and_balanced():
    assert g_score(99, 1, 7) == g_score(99, 1, 7)
    rng = RngState(5)
    n = 10**5
    bits = [g_score(rng.next_u64(), 1, 7) for _ in range(n)]
    assert abs(np.mean(bits) - 0.5) < 0.005


def test_g_score_layers_independent():
    rng = RngState(6)
    n = 10**5
    seeds = [rng.next_u64() for _ in range(n)]
    b1 = np.array([g_score(s, 1, 3) for s in seeds], dtype=float)
    b2 = np.array([g_score(s, 2, 3) for s in seeds], dtype=float)
    r = np.corrcoef(b1, b2)[0, 1]
    assert abs(r) < 0.01


def test_sample_token_point_mass():
    key = Key(1)
    rng = RngState(7)
    for scheme in ("greenred", "sweet", "synthid", "ideal"):
        params = SchemeParams(scheme, 5, 0.25, 4.0, 0.5, 30)
        d = Dist((42,), (1.0,))
        assert sample_token(d, params, key, (0, 0, 0, 0), rng) == 42


def test_greenred_two_way_bias():
    # support {a, b}, a green, delta = ln 3  ->  P(a) = 0.75
    key = Key(11)
    rng = RngState(8)
    params = SchemeParams("greenred", 5, 0.25, math.log(3))
    target = None
    for c in range(300):
        ctx = (c, c, c, c)
        gs = green_set(prf_seed(key, ctx), 0.25)
        if 10 in gs and 11 not in gs:
            target = ctx
            break
    assert target is not None
    hits = sum(sample_token(uniform((10, 11)), params, key, target,
                            rng.derive(i)) == 10
               for i in range(20000))
    assert abs(hits / 20000 - 0.75) < 0.01


def test_sweet_gate_closed_uses_base():
    # tau above the 2-way entropy: green frequency stays at gamma-free 1/2
    key = Key(12)
    rng = RngState(9)
    params = SchemeParams("sweet", 5, 0.5, 4.0, tau=1.0)
    d = uniform((10, 11))
    hits = Counter(sample_token(d, params, key, (1, 2, 3, i % 50),
                                rng.derive(i))
                   for i in range(10000))
    assert abs(hits[10] / 10000 - 0.5) < 0.013


def test_sweet_gate_open_biases():
    key = Key(13)
    rng = RngState(10)
    hot = SchemeParams("sweet", 5, 0.25, 4.0, tau=0.5)
    d = uniform((10, 11, 12, 13))  # entropy ln 4 > 0.5
    base = Counter(sample_token(d, SchemeParams("sweet", 5, 0.25, 4.0, tau=2.0),
                                key, (1, 2, 3, i % 25), rng.derive("a", i))
                   for i in range(4000))
    biased = Counter(sample_token(d, hot, key, (1, 2, 3, i % 25),
                                  rng.derive("b", i))
                     for i in range(4000))
    assert base != biased  # the gate changes sampling


def test_synthid_layer_update_example():
    up = synthid_layer_update(uniform((1, 2)), {1: 1, 2: 0})
    assert up.probs == (0.75, 0.25)
    same = synthid_layer_update(uniform((1, 2)), {1: 1, 2: 1})
    assert same.probs == (0.5, 0.5)


def test_synthid_update_average_recovers_base():
    d = Dist((1, 2), (0.3, 0.7))
    avg = np.zeros(2)
    for g1 in (0, 1):
        for g2 in (0, 1):
            up = synthid_layer_update(d, {1: g1, 2: g2})
            avg += np.array(up.probs) / 4.0
    assert np.allclose(avg, d.probs, atol=1e-12)


def test_detect_greenred_z_values():
    assert _binomial_z(25, 100, 0.25) == 0.0
    assert abs(_binomial_z(50, 100, 0.25) - 5.7735) < 1e-4
    assert (600 - 30 * 40 / 2) / math.sqrt(30 * 40 / 4) == 0.0


def test_detect_too_short():
    params = SchemeParams("greenred", 5, 0.25, 4.0)
    with pytest.raises(TooShortError):
        detect((1, 2, 3), params, Key(1))


def test_detect_sweet_requires_template_and_gates():
    task, tpl = build_suite(PROFILE_RICH)[0]
    key = Key(77)
    prog = generate(tpl, RngState(20))
    params = SchemeParams("sweet", 5, 0.25, 4.0, tau=0.6)
    with pytest.raises(ConfigError):
        detect(prog.tokens, params, key)
    res = detect(prog.tokens, params, key, model_ref=tpl)
    gated = sum(1 for i in range(4, tpl.emission_length)
                if tpl.entropy_profile[i] > 0.6)
    assert res.scored_tokens == gated
    with pytest.raises(TooShortError):
        detect(prog.tokens, SchemeParams("sweet", 5, 0.25, 4.0, tau=99.0),
               key, model_ref=tpl)


def test_detection_result_fields_consistent():
    task, tpl = build_suite(PROFILE_RICH)[0]
    key = Key(88)
    prog = generate(tpl, RngState(21))
    res = detect(prog.tokens, SchemeParams("greenred", 5, 0.25, 4.0), key)
    assert res.bit == int(res.z >= res.threshold)
    assert abs(res.p - 0.5 * math.erfc(res.z / math.sqrt(2))) < 1e-12
    assert res.threshold == DEFAULT_THRESHOLD


def test_calibrate_threshold():
    assert calibrate_threshold(0.5) == pytest.approx(0.0, abs=1e-12)
    assert calibrate_threshold(0.05) == pytest.approx(1.6449, abs=1e-4)
    assert calibrate_threshold(0.01) == pytest.approx(2.3263, abs=1e-4)
    with pytest.raises(OutOfRangeError):
        calibrate_threshold(0.0)


def test_calibrated_null_rate():
    rng = np.random.default_rng(3)
    zs = rng.normal(0, 1, size=10000)
    thr = calibrate_threshold(0.05)
    rate = float(np.mean(zs >= thr))
    assert abs(rate - 0.05) < 0.007


def test_is_marked_contract():
    key = Key(5)
    assert is_marked((1, 2, 3, 4, 5), key) == is_marked((1, 2, 3, 4, 5), key)
    with pytest.raises(WrongLengthError):
        is_marked((1, 2, 3), key)
    rng = RngState(30)
    n = 10**5
    frac = sum(is_marked(tuple(rng.randrange(len(VOCAB)) for _ in range(5)), key)
               for _ in range(n)) / n
    assert abs(frac - 0.5) < 0.005


def test_ideal_scheme_argmax_and_detection():
    task, tpl = build_suite(PROFILE_RICH)[0]
    key = Key(31)
    rng = RngState(32)
    single = ideal_watermark(task, tpl, 1, key, rng.derive("one"))
    assert single is not None and run_test_suite(task, single) == 1

    best = ideal_watermark(task, tpl, 60, key, rng.derive("many"))
    others = [generate(tpl, rng.derive("cmp", i)) for i in range(30)]
    assert marked_ratio(best.tokens, key) >= max(
        marked_ratio(o.tokens, key) for o in others) - 1e-12

    params = SchemeParams("ideal")
    res = detect(best.tokens, params, key)
    assert res.scored_tokens == len(best.tokens) - 4
    # ratio exactly 1/2 over T' five-grams gives z = 0
    assert _binomial_z(20, 40, 0.5) == 0.0


def test_ideal_scheme_beats_null_auroc():
    task, tpl = build_suite(PROFILE_RICH)[1]
    rng = RngState(33)
    zs_wm, zs_null = [], []
    for i in range(25):
        key = Key(rng.derive("k", i).next_u64())
        chosen = ideal_watermark(task, tpl, 40, key, rng.derive("g", i))
        zs_wm.append(detect(chosen.tokens, SchemeParams("ideal"), key).z)
        zs_null.append(detect(generate(tpl, rng.derive("n", i)).tokens,
                              SchemeParams("ideal"), key).z)
    assert auroc_vs_null(zs_wm) > 0.9
    assert 0.3 < auroc_vs_null(zs_null) < 0.7


def test_estimate_rates():
    r = estimate_rates([1, 1, 1, 1], [0, 0, 0, 0])
    assert (r.epsilon_pos, r.epsilon_neg) == (0.0, 0.0)
    assert estimate_rates([1, 1], [1, 0, 0, 0]).epsilon_pos == 0.25
    with pytest.raises(EmptyInputError):
        estimate_rates([], [1])


def test_key_independence_null_z_moments():
    # unwatermarked programs scored under many random keys: z ~ (0, 1)
    task, tpl = build_suite(PROFILE_RICH)[0]
    rng = RngState(40)
    progs = [generate(tpl, rng.derive("p", i)) for i in range(10)]
    params = SchemeParams("greenred", 5, 0.25, 4.0)
    zs = []
    for i in range(1000):
        key = Key(rng.derive("k", i).next_u64())
        zs.append(detect(progs[i % len(progs)].tokens, params, key).z)
    assert abs(np.mean(zs)) <= 0.05
    assert abs(np.var(zs) - 1.0) <= 0.1


def test_greenred_z_monotone_in_delta():
    task, tpl = build_suite(PROFILE_RICH)[0]
    rng = RngState(41)
    means = []
    for delta in (0.5, 1.0, 2.0, 3.0, 4.0):
        params = SchemeParams("greenred", 5, 0.25, delta)
        zs = []
        for i in range(120):
            key = Key(rng.derive("k", delta, i).next_u64())
            prog = watermarked_generate(tpl, params, key, rng.derive("g", delta, i))
            zs.append(detect(prog.tokens, params, key).z)
        means.append(float(np.mean(zs)))
    # expected z is non-decreasing in delta (allow small MC slack)
    for lo, hi in zip(means, means[1:]):
        assert hi >= lo - 0.12
    assert means[-1] > means[0] + 0.5


def test_watermarked_generation_always_passes():
    rng = RngState(42)
    for task, tpl in build_suite(PROFILE_RICH)[:4]:
        for scheme in (SchemeParams("greenred", 5, 0.25, 4.0),
                       SchemeParams("sweet", 5, 0.25, 4.0, 0.6),
                       SchemeParams("synthid", 5, 0.25, 0.0, 0.0, 30)):
            for i in range(10):
                key = Key(rng.derive(task.id, scheme.scheme, i).next_u64())
                prog = watermarked_generate(tpl, scheme, key,
                                            rng.derive("g", task.id, scheme.scheme, i))
                assert run_test_suite(task, prog) == 1


def test_sweet_tau_above_max_entropy_equals_base_sampling():
    _, tpl = build_suite(PROFILE_RICH)[0]
    key = Key(50)
    tau = tpl.max_entropy() + 0.1
    params = SchemeParams("sweet", 5, 0.25, 4.0, tau=tau)
    from wmlab.model import generate_tokens
    a = watermarked_generate(tpl, params, key, RngState(51))
    b = generate_tokens(tpl, RngState(51))
    assert list(a.tokens) == b


def test_scheme_params_validation():
    with pytest.raises(ConfigError):
        SchemeParams("nope").validate()
    with pytest.raises(ConfigError):
        SchemeParams("greenred", gamma=0.001).validate()  # gamma*|V| < 1
    with pytest.raises(ConfigError):
        SchemeParams("greenred", n_gram=1).validate()
    SchemeParams("synthid", rounds=30).validate()
