"""Two-moment phase-type fits (Tijms recipe), exact moments and sampling.

Family selection by squared coefficient of variation ``scv``:

* ``scv == 0``       deterministic
* ``0 < scv < 1``    mixture of Erlang(k-1) and Erlang(k) with a common rate
* ``scv == 1``       exponential
* ``scv > 1``        two-phase hyperexponential with balanced means
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InvalidInputError

DETERMINISTIC = "deterministic"
EXPONENTIAL = "exponential"
MIXED_ERLANG = "mixed-erlang"
HYPEREXPONENTIAL = "hyperexponential-2"

# integer codes understood by the simulation kernels
CODE_NEVER = -1
CODE_DET = 0
CODE_EXP = 1
CODE_MERL = 2
CODE_H2 = 3

_CODES = {DETERMINISTIC: CODE_DET, EXPONENTIAL: CODE_EXP,
          MIXED_ERLANG: CODE_MERL, HYPEREXPONENTIAL: CODE_H2}


def family_for_scv(scv: float) -> str:
    if scv < 0:
        raise InvalidInputError(f"scv must be nonnegative, got {scv}")
    if scv == 0:
        return DETERMINISTIC
    if scv == 1:
        return EXPONENTIAL
    if scv < 1:
        return MIXED_ERLANG
    return HYPEREXPONENTIAL


@dataclass(frozen=True)
class FittedDistribution:
    """Parameters of a fitted law.

    For ``mixed-erlang`` the variable is Erlang(k-1, rate) with probability
    ``p`` and Erlang(k, rate) otherwise.  For ``hyperexponential-2`` it is
    Exp(rate1) with probability ``p`` and Exp(rate2) otherwise, with
    ``p / rate1 == (1 - p) / rate2``.
    """

    family: str
    mean: float
    scv: float
    p: float = 1.0
    k: int = 1
    rate1: float = 0.0
    rate2: float = 0.0

    def moments(self):
        return moments(self)

    def kernel_params(self):
        """``(code, a, b, c)`` tuple consumed by the simulation kernels."""
        if self.family == DETERMINISTIC:
            return CODE_DET, self.mean, 0.0, 0.0
        if self.family == EXPONENTIAL:
            return CODE_EXP, self.mean, 0.0, 0.0
        if self.family == MIXED_ERLANG:
            return CODE_MERL, self.p, float(self.k), self.rate1
        return CODE_H2, self.p, self.rate1, self.rate2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == DETERMINISTIC:
            return (x >= self.mean).astype(float)
        if self.family == EXPONENTIAL:
            return stats.expon.cdf(x, scale=self.mean)
        if self.family == MIXED_ERLANG:
            lo = stats.gamma.cdf(x, self.k - 1, scale=1 / self.rate1) if self.k > 1 else (x >= 0).astype(float)
            hi = stats.gamma.cdf(x, self.k, scale=1 / self.rate1)
            return self.p * lo + (1 - self.p) * hi
        return (self.p * stats.expon.cdf(x, scale=1 / self.rate1)
                + (1 - self.p) * stats.expon.cdf(x, scale=1 / self.rate2))


def fit(mean: float, scv: float) -> FittedDistribution:
    """Fit a phase-type law to ``(mean, scv)``."""
    if mean < 0 or not math.isfinite(mean):
        raise InvalidInputError(f"mean must be finite and nonnegative, got {mean}")
    family = family_for_scv(scv)
    if family == DETERMINISTIC:
        return FittedDistribution(DETERMINISTIC, mean, 0.0)
    if mean == 0:
        raise InvalidInputError("a random law needs a positive mean")
    if family == EXPONENTIAL:
        return FittedDistribution(EXPONENTIAL, mean, 1.0, rate1=1.0 / mean)
    if family == MIXED_ERLANG:
        k = math.ceil(1.0 / scv - 1e-12)
        k = max(k, 2)
        # root of the scv equation that lies in [0, 1]
        p = (k * scv - math.sqrt(k * (1 + scv) - k * k * scv)) / (1 + scv)
        p = min(max(p, 0.0), 1.0)
        rate = (k - p) / mean
        return FittedDistribution(MIXED_ERLANG, mean, scv, p=p, k=k, rate1=rate, rate2=rate)
    p1 = 0.5 * (1 + math.sqrt((scv - 1) / (scv + 1)))
    p2 = 1 - p1
    return FittedDistribution(HYPEREXPONENTIAL, mean, scv, p=p1,
                              rate1=2 * p1 / mean, rate2=2 * p2 / mean)


def moments(d: FittedDistribution):
    """Return ``(mean, second_moment, variance, residual_mean)`` computed
    from the fitted parameters (not from the fit targets)."""
    if d.family == DETERMINISTIC:
        m1, m2 = d.mean, d.mean ** 2
    elif d.family == EXPONENTIAL:
        m1, m2 = 1 / d.rate1, 2 / d.rate1 ** 2
    elif d.family == MIXED_ERLANG:
        k, r, p = d.k, d.rate1, d.p
        m1 = (p * (k - 1) + (1 - p) * k) / r
        m2 = (p * (k - 1) * k + (1 - p) * k * (k + 1)) / r ** 2
    else:
        p, q = d.p, 1 - d.p
        m1 = p / d.rate1 + q / d.rate2
        m2 = 2 * p / d.rate1 ** 2 + 2 * q / d.rate2 ** 2
    if m1 == 0:
        raise InvalidInputError("residual life undefined for a zero-mean variable")
    return m1, m2, m2 - m1 * m1, m2 / (2 * m1)


def sample(d: FittedDistribution, rng: np.random.Generator, size=None):
    """Draw from ``d`` using a caller-owned generator."""
    if d.family == DETERMINISTIC:
        return np.full(size, d.mean) if size is not None else d.mean
    if d.family == EXPONENTIAL:
        return rng.exponential(d.mean, size)
    if d.family == MIXED_ERLANG:
        shape = np.where(rng.random(size) < d.p, d.k - 1, d.k)
        # shape 0 cannot occur: k >= 2
        out = rng.gamma(shape, 1.0 / d.rate1, size)
    else:
        rate = np.where(rng.random(size) < d.p, d.rate1, d.rate2)
        out = rng.exponential(1.0, size) / rate
    return out if size is not None else float(out)


def density_zero_factor(d: FittedDistribution, mode: str = "whitt") -> float:
    """``E[A] * g(0)``: mean times the density at zero of an interarrival law.

    ``mode="whitt"`` uses the two-moment approximation
    ``2 c2 / (c2 + 1)`` for ``c2 > 1`` and ``c2 ** 4`` otherwise.
    """
    if mode == "whitt":
        c2 = d.scv
        return 2 * c2 / (c2 + 1) if c2 > 1 else c2 ** 4
    if mode != "exact":
        raise InvalidInputError(f"unknown g0 mode {mode!r}")
    if d.family == DETERMINISTIC:
        return 0.0
    if d.family == EXPONENTIAL:
        return 1.0
    if d.family == HYPEREXPONENTIAL:
        return d.mean * (d.p * d.rate1 + (1 - d.p) * d.rate2)
    # only an Erlang-1 branch has positive density at 0
    if d.k - 1 == 1:
        return d.mean * d.p * d.rate1
    return 0.0
