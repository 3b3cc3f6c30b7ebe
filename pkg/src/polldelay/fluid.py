"""Deterministic fluid picture of the saturated intersection and the drain
times used in the stability argument.

In the fluid model flow ``{g,j}`` receives work at rate ``rho_hat[g,j] / L``
and drains at rate 1 while its group is green; all-red times are ignored.
The cycle length ``c`` is a free scale parameter.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InfiniteDrainError, InvalidInputError, SaturatedFlowError
from .model import DerivedQuantities, IntersectionSpec


@dataclass(frozen=True)
class CycleParts:
    busy: float  # P_j: green, flow non-empty
    idle_green: float  # P_1: green, flow already empty
    red: float  # P_R
    cycle: float


@dataclass(frozen=True)
class FluidDelayLaw:
    """Zero with probability ``atom``, otherwise uniform on ``[0, red]``."""

    atom: float
    red: float

    @property
    def mean(self) -> float:
        return (1 - self.atom) * self.red / 2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.red == 0:
            return np.where(x >= 0, 1.0, 0.0)
        u = np.clip(x / self.red, 0.0, 1.0)
        return np.where(x < 0, 0.0, self.atom + (1 - self.atom) * u)


@dataclass(frozen=True)
class FluidTrajectory:
    times: np.ndarray
    workload: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "workload"])
        for t, v in zip(self.times, self.workload):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    def mean(self) -> float:
        """Time average of the piecewise-linear path."""
        dt = np.diff(self.times)
        return float(np.sum(dt * (self.workload[1:] + self.workload[:-1]) / 2) / (self.times[-1] - self.times[0]))


def _fractions(dq: DerivedQuantities, flow):
    g, j = dq.spec.locate(flow)
    grp = dq.spec.groups[g]
    r1 = grp.dominant.relative_load / dq.L
    rj = grp.flows[j].relative_load / dq.L
    if rj >= 1 or r1 >= 1:
        raise SaturatedFlowError("flow inflow rate reaches the drain rate")
    return g, j, r1, rj


def cycle_parts(dq: DerivedQuantities, flow, c: float = 1.0) -> CycleParts:
    if not c > 0:
        raise InvalidInputError("cycle length must be positive")
    _, j, r1, rj = _fractions(dq, flow)
    red = (1 - r1) * c
    busy = rj * (1 - r1) / (1 - rj) * c if j else r1 * c
    return CycleParts(busy, r1 * c - busy, red, c)


def fluid_delay_law(dq: DerivedQuantities, flow, c: float = 1.0) -> FluidDelayLaw:
    p = cycle_parts(dq, flow, c)
    return FluidDelayLaw(p.idle_green / c, p.red)


def fluid_delay_pieces(dq: DerivedQuantities, flow, c: float = 1.0):
    """The law assembled from its three arrival epochs: ``[(prob, lo, hi)]``
    with ``lo == hi == 0`` for the idle part of the green.  Arrivals in the
    busy green wait uniformly on ``[0, r P_R]``, arrivals in red uniformly on
    ``[r P_R, P_R]`` where ``r`` is the flow's inflow rate."""
    _, _, _, rj = _fractions(dq, flow)
    p = cycle_parts(dq, flow, c)
    return [(p.idle_green / c, 0.0, 0.0),
            (p.busy / c, 0.0, rj * p.red),
            (p.red / c, rj * p.red, p.red)]


def pieces_cdf(pieces, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for prob, lo, hi in pieces:
        if hi == lo:
            out += prob * (x >= lo)
        else:
            out += prob * np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return out


def fluid_trajectory(dq: DerivedQuantities, flow, c: float = 1.0) -> FluidTrajectory:
    """Workload of one flow over a cycle starting at its green."""
    _, _, r1, rj = _fractions(dq, flow)
    p = cycle_parts(dq, flow, c)
    start = rj * (1 - r1) * c
    times = [0.0, p.busy]
    loads = [start, 0.0]
    if p.idle_green > 0:
        times.append(p.busy + p.idle_green)
        loads.append(0.0)
    times.append(c)
    loads.append(rj * p.red)
    return FluidTrajectory(np.array(times), np.array(loads))


def fluid_trajectory_at(dq: DerivedQuantities, flow, t, c: float = 1.0, offset: float = 0.0):
    """Evaluate a trajectory at times ``t``; ``offset`` is where this flow's
    green starts within a common cycle."""
    tr = fluid_trajectory(dq, flow, c)
    return np.interp(np.mod(np.asarray(t, dtype=float) - offset, c), tr.times, tr.workload)


def drain_times(spec: IntersectionSpec, initial, rates, service_rates):
    """First switch-away times ``t_1..t_M`` from fluid levels ``initial``.

    ``initial``, ``rates`` and ``service_rates`` map flow ids to values
    (vehicles and vehicles per unit time).  All-red times are taken as zero.
    """
    times = []
    t = 0.0
    for grp in spec.groups:
        longest = 0.0
        for f in grp.flows:
            lam, mu = rates[f.id], service_rates[f.id]
            if lam >= mu:
                raise InfiniteDrainError(f"flow {f.id}: arrival rate {lam} >= service rate {mu}")
            longest = max(longest, (initial.get(f.id, 0.0) + lam * t) / (mu - lam))
        t += longest
        times.append(t)
    return times


def fluid_drift(spec: IntersectionSpec, rho: float) -> float:
    """Rate of change of the dominant-flow workload once every group has been
    visited: ``sum_g rho_{g,1} - 1``."""
    return spec.L * rho - 1.0
