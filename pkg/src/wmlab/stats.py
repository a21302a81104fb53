"""Statistical primitives: normal CDF/quantile, AUROC against the standard
normal null, the Anderson-Darling test for a fully specified N(0,1), and
binomial rate utilities.

The normal CDF and quantile are scipy's ``ndtr``/``ndtri`` (machine-precision
erf-based implementations); everything else is computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (EmptyInputError, NonFiniteError, OutOfRangeError,
                     TooFewSamplesError)

# Critical values of A^2 for a fully specified continuous distribution
# (case 0), classical table: significance level -> critical value.
AD_CRITICAL = {0.15: 1.610, 0.10: 1.933, 0.05: 2.492, 0.025: 3.070, 0.01: 3.857}

_PHI_CLAMP = 1e-15


def normal_cdf(z: float) -> float:
    """Phi(z), absolute error well below 1e-12."""
    if not math.isfinite(z):
        raise NonFiniteError(f"normal_cdf({z})")
    return float(ndtr(z))


def normal_quantile(p: float) -> float:
    """Phi^-1(p) for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise OutOfRangeError(f"quantile needs p in (0,1), got {p}")
    return float(ndtri(p))


def auroc_vs_null(zs) -> float:
    """Exact AUROC of the samples against a continuous N(0,1) negative class.

    P(z_sample > Z), Z ~ N(0,1), equals the mean of Phi(z_i).
    """
    zs = np.asarray(list(zs), dtype=float)
    if zs.size == 0:
        raise EmptyInputError("auroc_vs_null of empty list")
    return float(np.mean(ndtr(zs)))


@dataclass(frozen=True)
class AdResult:
    a_squared: float
    decisions: dict  # significance level -> "accept" | "reject"

    def accepted(self, level: float = 0.05) -> bool:
        return self.decisions[level] == "accept"


def anderson_darling(zs) -> AdResult:
    """A^2 statistic of the sample against a fully specified N(0,1).

    Phi values are clamped into [1e-15, 1 - 1e-15] so degenerate samples
    produce a large finite statistic (rejected at every level).
    """
    z = np.sort(np.asarray(list(zs), dtype=float))
    n = z.size
    if n < 5:
        raise TooFewSamplesError(f"anderson_darling needs n >= 5, got {n}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("anderson_darling: non-finite sample")
    u = np.clip(ndtr(z), _PHI_CLAMP, 1.0 - _PHI_CLAMP)
    i = np.arange(1, n + 1)
    s = np.sum((2 * i - 1) * (np.log(u) + np.log1p(-u[::-1])))
    a2 = float(-n - s / n)
    decisions = {lvl: ("reject" if a2 > crit else "accept")
                 for lvl, crit in AD_CRITICAL.items()}
    return AdResult(a2, decisions)


@dataclass(frozen=True)
class RateResult:
    rate: float
    ci_low: float
    ci_high: float
    n: int


def empirical_rate(bits, confidence: float = 0.95) -> RateResult:
    """Mean of 0/1 outcomes with a Wilson score interval."""
    bits = list(bits)
    if not bits:
        raise EmptyInputError("empirical_rate of empty list")
    n = len(bits)
    p = sum(bits) / n
    z = normal_quantile(0.5 + confidence / 2.0)
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return RateResult(p, max(0.0, center - half), min(1.0, center + half), n)


def binomial_halfwidth(p: float, n: int, confidence: float = 0.99) -> float:
    """Normal-approximation half-width of a binomial proportion CI."""
    z = normal_quantile(0.5 + confidence / 2.0)
    return z * math.sqrt(p * (1.0 - p) / n)
