"""Closed-form delay results: heavy-traffic law, light-traffic means and the
interpolation between them.

Flows are addressed either by id or by a zero-based ``(group, position)``
pair, position 0 being the dominant flow of the group.  Groups are cyclic:
``R_g`` is the all-red period that follows the green of group ``g``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import density_zero_factor
from .errors import InvalidInputError, UnstableLoadError, UnsupportedTopologyError
from .model import (DerivedQuantities, IntersectionSpec, LoadedScenario,
                    check_stability, derive_quantities)

HT_FORMULAS = ("theorem3", "corollary")


@dataclass(frozen=True)
class DelayLaw:
    """Zero with probability ``atom``, otherwise ``U * Gamma(shape, rate)``
    with ``U`` uniform on [0, 1] and independent of the Gamma variable."""

    atom: float
    shape: float
    rate: float

    @property
    def mean(self) -> float:
        return (1 - self.atom) * self.shape / (2 * self.rate)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0, 0.0, self.atom)
        pos = x > 0
        if np.any(pos):
            z = self.rate * x[pos]
            a = self.shape
            # P(U G <= x) = F(x) + x E[1/G; G > x]
            if a > 1:
                tail = special.gammaincc(a - 1, z) / (a - 1)
            else:
                tail = _upper_gamma(a - 1, z) / special.gamma(a)
            body = special.gammainc(a, z) + z * tail
            out[pos] = self.atom + (1 - self.atom) * np.minimum(body, 1.0)
        return out

    def sample(self, rng: np.random.Generator, size=None):
        g = rng.gamma(self.shape, 1 / self.rate, size) * rng.random(size)
        return np.where(rng.random(size) < self.atom, 0.0, g)


def _upper_gamma(s, x):
    """Unnormalized upper incomplete gamma for ``-1 < s <= 0``."""
    if s == 0:
        return special.exp1(x)
    # Gamma(s, x) = (Gamma(s + 1, x) - x^s e^{-x}) / s
    return (special.gammaincc(s + 1, x) * special.gamma(s + 1) - x ** s * np.exp(-x)) / s


@dataclass(frozen=True)
class InterpolationConstants:
    order: int
    K0: float
    K1: float
    K2: float  # 0 for order 1
    ht_mean: float
    lt_value: float
    lt_slope: float

    def numerator(self, rho: float) -> float:
        return self.K0 + self.K1 * rho + self.K2 * rho * rho


def _resolve(dq_or_spec, flow):
    spec = dq_or_spec.spec if isinstance(dq_or_spec, DerivedQuantities) else dq_or_spec
    g, j = spec.locate(flow)
    return spec, g, j


def _ratios(dq: DerivedQuantities, g: int, j: int):
    grp = dq.spec.groups[g]
    if len(dq.spec.groups) < 2 or grp.dominant.relative_load >= dq.L * (1 - 1e-15):
        raise UnsupportedTopologyError("heavy-traffic limit needs at least two loaded groups")
    return grp.dominant.relative_load / dq.L, grp.flows[j].relative_load / dq.L


def ht_delay_law(dq: DerivedQuantities, flow) -> DelayLaw:
    """Limit law of the scaled delay ``(1 - L rho) W`` as ``L rho -> 1``."""
    _, g, j = _resolve(dq, flow)
    r1, rj = _ratios(dq, g, j)
    shape = 2 * dq.total_red * dq.delta / dq.sigma2 + 1
    rate = 2 * dq.delta / (dq.sigma2 * (1 - r1))
    lam1 = dq.spec.groups[g].dominant.relative_load
    lamj = dq.spec.groups[g].flows[j].relative_load
    atom = (lam1 - lamj) / (dq.L - lamj)
    return DelayLaw(atom, shape, rate)


def ht_scaled_mean(dq: DerivedQuantities, flow, ht_formula: str = "theorem3") -> float:
    """``lim (1 - L rho) E[W]``.

    ``theorem3`` is the mean of :func:`ht_delay_law`; ``corollary`` evaluates
    the printed closed form with the un-normalized variance and
    ``sigma2 / delta``.
    """
    _, g, j = _resolve(dq, flow)
    r1, rj = _ratios(dq, g, j)
    weight = (1 - r1) ** 2 / (1 - rj)
    if ht_formula == "theorem3":
        return weight * (dq.total_red / 2 + dq.sigma2 / (4 * dq.delta))
    if ht_formula == "corollary":
        return weight * (dq.total_red / 2 + dq.sigma2_corollary / dq.delta)
    raise InvalidInputError(f"unknown ht_formula {ht_formula!r}")


def _cyc_sum(values, start, stop, M):
    """Sum of ``values[k mod M]`` for integer ``k`` in ``[start, stop)``."""
    return sum(values[k % M] for k in range(start, stop))


def _lt_poisson(dq: DerivedQuantities, rho: float, g: int, j: int, stay_empty: bool) -> float:
    spec = dq.spec
    M = len(spec.groups)
    if dq.total_red <= 0:
        raise UnsupportedTopologyError("light-traffic limit needs a positive mean all-red time")
    flow = spec.groups[g].flows[j]
    b, b_res = flow.headway.mean, flow.headway.residual_mean
    r_gj = rho * flow.relative_load
    r_grp = rho * dq.group_load
    R, R_res, ER = dq.red_mean, dq.red_residual, dq.total_red

    # own flow busy on arrival
    total = r_gj * (b_res + b)
    # another group's vehicle crossing on arrival
    for m in range(g - M + 1, g):
        reds = _cyc_sum(R, m, g, M)
        for f in spec.groups[m % M].flows:
            total += rho * f.relative_load * (f.headway.residual_mean + reds + b)
    # arrival during all-red period m
    for m in range(g - M, g):
        between = _cyc_sum(r_grp, m + 1, g, M)
        before = _cyc_sum(R, g - M, m, M)
        after = _cyc_sum(R, m + 1, g, M)
        inner = (R_res[m % M] * (1 - rho + 2 * between + r_gj)
                 + before * (between + r_gj)
                 + after * (1 - rho + between)
                 + (1 - rho) * b)
        total += R[m % M] / ER * inner
    if not stay_empty:
        total += sum(rho * f.relative_load for k, f in enumerate(spec.groups[g].flows) if k != j) * b
    return total


def _lt_general(dq: DerivedQuantities, rho: float, g: int, j: int, stay_empty: bool, g0: str) -> float:
    spec = dq.spec
    M = len(spec.groups)
    if dq.total_red <= 0:
        raise UnsupportedTopologyError("light-traffic limit needs a positive mean all-red time")
    grp = spec.groups[g]
    flow = grp.flows[j]
    b, b_res = flow.headway.mean, flow.headway.residual_mean
    r_gj = rho * flow.relative_load
    factor = density_zero_factor(flow.interarrival.fitted(), g0)

    value = r_gj * (factor - 1) * b_res + rho * dq.mean_headway_residual + b
    for k, f in enumerate(grp.flows):
        if k != j:
            value -= rho * f.relative_load * (f.headway.residual_mean + (b if stay_empty else 0.0))
    value += (1 - rho + r_gj) * dq.total_red_residual + (rho - rho * dq.group_load[g]) * dq.total_red
    var_term = 0.0
    for m in range(g - M, g):
        var_term += _cyc_sum(rho * dq.group_load, m + 1, g, M) * dq.red_var[m % M]
    return value + var_term / dq.total_red


def lt_mean_poisson(scenario: LoadedScenario, flow, stay_empty: bool = True) -> float:
    """Light-traffic mean delay for Poisson arrivals, exact to first order in
    ``rho``; random all-red times allowed."""
    dq = derive_quantities(scenario.spec)
    g, j = scenario.spec.locate(flow)
    return _lt_poisson(dq, scenario.rho, g, j, stay_empty)


def lt_mean_general(scenario: LoadedScenario, flow, stay_empty: bool = True, g0: str = "whitt") -> float:
    """Light-traffic mean delay for renewal arrivals.

    The Poisson first-order term is corrected through ``E[A] g(0)`` of the
    flow's interarrival law.  With ``stay_empty=False`` a vehicle arriving
    while another flow of its own group is crossing waits its own headway.
    """
    dq = derive_quantities(scenario.spec)
    g, j = scenario.spec.locate(flow)
    return _lt_general(dq, scenario.rho, g, j, stay_empty, g0)


def lt_coefficients(spec: IntersectionSpec, flow, stay_empty: bool = True, g0: str = "whitt"):
    """``(value at rho=0, slope)`` of the (affine) light-traffic mean."""
    dq = derive_quantities(spec)
    g, j = spec.locate(flow)
    v0 = _lt_general(dq, 0.0, g, j, stay_empty, g0)
    v1 = _lt_general(dq, 1.0, g, j, stay_empty, g0)
    return v0, v1 - v0


def select_order(spec: IntersectionSpec, flow) -> int:
    """1 when the other groups together carry less than the rest of the own
    group (slope at zero load tends to be small or negative), else 2."""
    g, i = spec.locate(flow)
    grp = spec.groups[g]
    others = sum(spec.groups[m].load for m in range(len(spec.groups)) if m != g)
    siblings = sum(f.relative_load for k, f in enumerate(grp.flows) if k != i)
    return 1 if others - siblings < 0 else 2


def interpolation_constants(spec: IntersectionSpec, flow, order: int = 2, *,
                            ht_formula: str = "theorem3", g0: str = "whitt",
                            stay_empty: bool = True, sigma2: str = "lemma1") -> InterpolationConstants:
    dq = derive_quantities(spec, sigma2)
    g, j = spec.locate(flow)
    v0 = _lt_general(dq, 0.0, g, j, stay_empty, g0)
    slope = _lt_general(dq, 1.0, g, j, stay_empty, g0) - v0
    ht = ht_scaled_mean(dq, (g, j), ht_formula)
    L = dq.L
    if order == 1:
        return InterpolationConstants(1, v0, L * (ht - v0), 0.0, ht, v0, slope)
    if order != 2:
        raise InvalidInputError(f"order must be 1 or 2, got {order!r}")
    k1 = slope - L * v0
    k2 = L * L * (ht - v0) - L * k1
    return InterpolationConstants(2, v0, k1, k2, ht, v0, slope)


def approx_mean_delay(spec: IntersectionSpec, rho: float, flow, order="auto", *,
                      ht_formula: str = "theorem3", g0: str = "whitt",
                      stay_empty: bool = True, sigma2: str = "lemma1") -> float:
    """Interpolated mean delay ``(K0 + K1 rho [+ K2 rho^2]) / (1 - L rho)``."""
    verdict = check_stability(spec, rho)
    if not verdict.stable:
        raise UnstableLoadError(f"L*rho = {spec.L * rho:.6g} is not below 1", verdict.margin)
    if order == "auto":
        order = select_order(spec, flow)
    k = interpolation_constants(spec, flow, int(order), ht_formula=ht_formula, g0=g0,
                                stay_empty=stay_empty, sigma2=sigma2)
    return k.numerator(rho) / (1 - spec.L * rho)
