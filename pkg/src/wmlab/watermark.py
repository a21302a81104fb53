"""N-gram watermark schemes: green/red logit bias, entropy-gated green/red
(SWEET-style), tournament sampling (SynthID-style), and the brute-force
"ideal" scheme that selects the most marked candidate.

All schemes share one keyed context hash: the previous N-1 token ids are
folded into the secret key one mix round per token, and the resulting seed
drives the per-position pseudorandomness (green sets, g-score bits).
Positions with fewer than N-1 predecessors use a sentinel id during
generation and are excluded from detection scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (ConfigError, ContextLengthError, EmptyInputError,
                     OutOfRangeError, TooShortError, WrongLengthError)
from .minilang import Program, Task, Vocabulary, VOCAB, parse, run_test_suite
from .model import Dist, Template, entropy
from .rng import GOLDEN, MASK64, RngState, fold, fold_np, mix64_np
from .stats import normal_cdf, normal_quantile

SENTINEL_ID = 0xFFFFFFFF  # padding id for positions before N-1 (outside vocab)

SCHEMES = ("greenred", "sweet", "synthid", "ideal")


@dataclass(frozen=True)
class Key:
    """64-bit secret; sampled independently of any (task, program) pair."""

    value: int

    def __post_init__(self):
        object.__setattr__(self, "value", self.value & MASK64)


def random_key(rng: RngState) -> Key:
    return Key(rng.next_u64())


@dataclass(frozen=True)
class SchemeParams:
    scheme: str = "greenred"
    n_gram: int = 5
    gamma: float = 0.25
    delta: float = 2.0
    tau: float = 0.0
    rounds: int = 30

    def validate(self, vocab: Vocabulary = VOCAB) -> "SchemeParams":
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.n_gram < 2:
            raise ConfigError("n_gram must be >= 2")
        if not (0.0 < self.gamma < 1.0) or self.gamma * len(vocab) < 1.0:
            raise ConfigError(f"gamma {self.gamma} incompatible with |V|={len(vocab)}")
        if self.delta < 0.0 or self.tau < 0.0 or self.rounds < 1:
            raise ConfigError("delta, tau must be >= 0 and rounds >= 1")
        return self


@dataclass(frozen=True)
class DetectionResult:
    z: float
    p: float
    scored_tokens: int
    bit: int
    threshold: float


@dataclass(frozen=True)
class RateEstimate:
    epsilon_pos: float
    epsilon_neg: float
    n_null: int
    n_watermarked: int


DEFAULT_THRESHOLD = normal_quantile(0.95)  # epsilon_pos = 0.05


def prf_seed(key: Key, context, n_gram: int = 5) -> int:
    """Deterministic 64-bit seed from the N-1 context ids."""
    context = tuple(context)
    if len(context) != n_gram - 1:
        raise ContextLengthError(
            f"context length {len(context)} != n_gram-1 = {n_gram - 1}")
    h = key.value
    for tok in context:
        h = fold(h, tok)
    return h


_VOCAB_IDS = np.arange(len(VOCAB), dtype=np.uint64)


def _vocab_keys(seed: int, vocab: Vocabulary) -> np.ndarray:
    ids = _VOCAB_IDS if vocab is VOCAB else np.arange(len(vocab), dtype=np.uint64)
    return fold_np(seed, ids)


def green_set(seed: int, gamma: float, vocab: Vocabulary = VOCAB) -> frozenset:
    """The floor(gamma*|V|) tokens ranked first by a seed-keyed permutation.

    The permutation orders tokens by their keyed hash (ties, which need a
    64-bit collision, fall back to id order).
    """
    g = int(gamma * len(vocab))
    keys = _vocab_keys(seed, vocab)
    order = np.argsort(keys, kind="stable")
    return frozenset(int(t) for t in order[:g])


def _is_green(seed: int, token: int, gamma: float, vocab: Vocabulary) -> bool:
    g = int(gamma * len(vocab))
    keys = _vocab_keys(seed, vocab)
    kth = np.partition(keys, g - 1)[g - 1]
    tk = keys[token]
    if tk != kth:
        return bool(tk < kth)
    # hash tie on the boundary: count strictly-smaller and id-order ties
    smaller = int(np.sum(keys < kth))
    tied = np.flatnonzero(keys == kth)
    return bool(token in tied[: g - smaller])


def g_score(seed: int, layer: int, token: int) -> int:
    """Bernoulli(1/2) bit, independent across layers for random seeds."""
    return fold(fold(seed, layer), token) & 1


def _g_bits(seed: int, layer: int, tokens: np.ndarray) -> np.ndarray:
    h = fold(seed, layer)
    return (fold_np(h, tokens) & np.uint64(1)).astype(np.int64)


def is_marked(fivegram, key: Key) -> int:
    fivegram = tuple(fivegram)
    if len(fivegram) != 5:
        raise WrongLengthError(f"is_marked needs 5 ids, got {len(fivegram)}")
    h = key.value
    for tok in fivegram:
        h = fold(h, tok)
    return h & 1


def synthid_layer_update(dist: Dist, g) -> Dist:
    """Exact winner distribution of one two-competitor match.

    Two i.i.d. draws from ``dist`` compete; the higher g-score wins, ties are
    broken by a fair coin:  P'(x) = p(x) * (1 + loser_mass)  for g(x) = 1,
    P'(x) = p(x) * loser_mass  for g(x) = 0.
    """
    dist.validate()
    bits = [g[t] if not callable(g) else g(t) for t in dist.ids]
    loser_mass = sum(p for p, b in zip(dist.probs, bits) if not b)
    probs = tuple(p * (1.0 + loser_mass) if b else p * loser_mass
                  for p, b in zip(dist.probs, bits))
    total = sum(probs)
    return Dist(dist.ids, tuple(p / total for p in probs))


def _greenred_bias(dist: Dist, seed: int, gamma: float, delta: float,
                   vocab: Vocabulary) -> Dist:
    green = green_set(seed, gamma, vocab)
    weights = [p * math.exp(delta) if t in green else p
               for t, p in zip(dist.ids, dist.probs)]
    total = sum(weights)
    return Dist(dist.ids, tuple(w / total for w in weights))


def _synthid_probs(dist: Dist, seed: int, rounds: int) -> np.ndarray:
    """m stacked layer updates on raw floats (tiny masses may underflow to 0)."""
    ids = np.asarray(dist.ids, dtype=np.uint64)
    p = np.asarray(dist.probs, dtype=float)
    for layer in range(1, rounds + 1):
        bits = _g_bits(seed, layer, ids)
        loser = float(p[bits == 0].sum())
        p = np.where(bits == 1, p * (1.0 + loser), p * loser)
        p = p / p.sum()
    return p


def sample_token(dist: Dist, params: SchemeParams, key: Key, context,
                 rng: RngState, vocab: Vocabulary = VOCAB) -> int:
    """One next-token draw under the scheme's sampling rule."""
    dist.validate()
    if dist.is_point():
        return dist.ids[0]
    scheme = params.scheme
    if scheme == "sweet" and entropy(dist) <= params.tau:
        return dist.ids[rng.sample_categorical(dist.probs)]
    if scheme in ("greenred", "sweet"):
        seed = prf_seed(key, context, params.n_gram)
        biased = _greenred_bias(dist, seed, params.gamma, params.delta, vocab)
        return biased.ids[rng.sample_categorical(biased.probs)]
    if scheme == "synthid":
        seed = prf_seed(key, context, params.n_gram)
        probs = _synthid_probs(dist, seed, params.rounds)
        return dist.ids[rng.sample_categorical(probs)]
    # "ideal" watermarks by candidate selection, not by sampling bias
    return dist.ids[rng.sample_categorical(dist.probs)]


def watermarked_generate(template: Template, params: SchemeParams, key: Key,
                         rng: RngState, vocab: Vocabulary = VOCAB) -> Program:
    """Emit the template under the scheme's sampler and parse the result."""
    n_ctx = params.n_gram - 1
    out: list[int] = []
    for pos in range(template.emission_length):
        dist = template.dist_at(pos, out)
        if len(out) >= n_ctx:
            context = tuple(out[-n_ctx:])
        else:
            context = (SENTINEL_ID,) * (n_ctx - len(out)) + tuple(out)
        out.append(sample_token(dist, params, key, context, rng, vocab))
    return parse(out)


# --- detection ----------------------------------------------------------------

def _binomial_z(count: float, trials: int, rate: float) -> float:
    return (count - rate * trials) / math.sqrt(trials * rate * (1.0 - rate))


def detect(tokens, params: SchemeParams, key: Key,
           model_ref: Optional[Template] = None,
           threshold: float = DEFAULT_THRESHOLD,
           vocab: Vocabulary = VOCAB) -> DetectionResult:
    """Score a token sequence and return the z-based decision."""
    tokens = tuple(tokens)
    n = params.n_gram
    scheme = params.scheme

    if scheme == "ideal":
        t_prime = len(tokens) - 4
        if t_prime <= 0:
            raise TooShortError("fewer than one complete 5-gram")
        marked = sum(is_marked(tokens[i:i + 5], key) for i in range(t_prime))
        z = _binomial_z(marked, t_prime, 0.5)
        return _result(z, t_prime, threshold)

    if len(tokens) < n:
        raise TooShortError(f"need at least {n} tokens")
    positions = range(n - 1, len(tokens))

    if scheme == "sweet":
        if model_ref is None:
            raise ConfigError("sweet detection needs the generating template")
        if model_ref.emission_length != len(tokens):
            raise ConfigError("token stream length does not match template")
        positions = [i for i in positions if model_ref.entropy_profile[i] > params.tau]
        if not positions:
            raise TooShortError("no positions above the entropy threshold")

    if scheme in ("greenred", "sweet"):
        hits = 0
        for i in positions:
            seed = prf_seed(key, tokens[i - n + 1:i], n)
            if _is_green(seed, tokens[i], params.gamma, vocab):
                hits += 1
        t = len(list(positions))
        z = _binomial_z(hits, t, params.gamma)
        return _result(z, t, threshold)

    if scheme == "synthid":
        seeds = np.array([prf_seed(key, tokens[i - n + 1:i], n) for i in positions],
                         dtype=np.uint64)
        toks = np.array([tokens[i] for i in positions], dtype=np.uint64)
        m = params.rounds
        total = 0
        for layer in range(1, m + 1):
            h = mix64_np(seeds ^ np.uint64(((layer + 1) * GOLDEN) & MASK64))
            total += int(np.sum((mix64_np(h ^ ((toks + np.uint64(1))
                                               * np.uint64(GOLDEN)))
                                 & np.uint64(1))))
        t = len(seeds)
        z = (total - m * t / 2.0) / math.sqrt(m * t / 4.0)
        return _result(z, t, threshold)

    raise ConfigError(f"unknown scheme {scheme!r}")


def _result(z: float, scored: int, threshold: float) -> DetectionResult:
    p = 1.0 - normal_cdf(z)
    return DetectionResult(z=z, p=p, scored_tokens=scored,
                           bit=int(z >= threshold), threshold=threshold)


def calibrate_threshold(epsilon_pos: float) -> float:
    """z threshold with null decision bit ~ Bernoulli(epsilon_pos)."""
    if not 0.0 < epsilon_pos < 1.0:
        raise OutOfRangeError(f"epsilon_pos must be in (0,1), got {epsilon_pos}")
    return normal_quantile(1.0 - epsilon_pos)


# --- ideal scheme ---------------------------------------------------------------

def marked_ratio(tokens, key: Key) -> float:
    tokens = tuple(tokens)
    t_prime = len(tokens) - 4
    if t_prime <= 0:
        raise TooShortError("fewer than one complete 5-gram")
    return sum(is_marked(tokens[i:i + 5], key) for i in range(t_prime)) / t_prime


def ideal_watermark(task: Task, template: Template, t_gen: int, key: Key,
                    rng: RngState) -> Optional[Program]:
    """Best-of-t_gen candidate selection by marked 5-gram ratio.

    Candidates failing the task's test suite are skipped; returns None when
    no candidate passes (the no-result outcome).
    """
    from .model import generate  # local import to keep module load light

    best = None
    best_ratio = 0.0
    for _ in range(max(1, t_gen)):
        cand = generate(template, rng)
        if run_test_suite(task, cand) != 1:
            continue
        ratio = marked_ratio(cand.tokens, key)
        if best is None or ratio > best_ratio:
            best, best_ratio = cand, ratio
    return best


def estimate_rates(detections_on_watermarked, detections_on_null) -> RateEstimate:
    wm = list(detections_on_watermarked)
    null = list(detections_on_null)
    if not wm or not null:
        raise EmptyInputError("estimate_rates needs non-empty bit lists")
    eps_neg = sum(1 - b for b in wm) / len(wm)
    eps_pos = sum(null) / len(null)
    return RateEstimate(epsilon_pos=eps_pos, epsilon_neg=eps_neg,
                        n_null=len(null), n_watermarked=len(wm))
