"""Intersection data model, load normalization and derived constants.

Loads are stored *unscaled*: the relative loads ``rho_hat`` of all flows sum
to one, and an analysis picks the total load ``rho``.  Flow ``i`` then has
flow ratio ``rho * rho_hat[i]``.  All times are seconds.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import distributions as dist
from .errors import DegenerateGroupError, InvalidInputError


@dataclass(frozen=True)
class DistributionModel:
    """A law described by its first two moments; the family follows the scv."""

    mean: float
    scv: float = 1.0
    family: str = field(default="", compare=False)

    def __post_init__(self):
        if self.scv < 0 or not math.isfinite(self.scv):
            raise InvalidInputError(f"scv must be finite and >= 0, got {self.scv}")
        if self.mean < 0 or not math.isfinite(self.mean):
            raise InvalidInputError(f"mean must be finite and >= 0, got {self.mean}")
        if self.mean == 0 and self.scv != 0:
            raise InvalidInputError("only a deterministic law may have mean 0")
        object.__setattr__(self, "family", dist.family_for_scv(self.scv))

    @property
    def variance(self) -> float:
        return self.scv * self.mean ** 2

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean ** 2

    @property
    def residual_mean(self) -> float:
        """``E[X^2] / (2 E[X])``; zero for a zero-length deterministic law."""
        if self.mean == 0:
            return 0.0
        return self.second_moment / (2 * self.mean)

    def fitted(self) -> dist.FittedDistribution:
        return dist.fit(self.mean, self.scv)

    def scaled(self, factor: float) -> "DistributionModel":
        return DistributionModel(self.mean * factor, self.scv)


@dataclass(frozen=True)
class FlowSpec:
    id: str
    relative_load: float
    headway: DistributionModel
    interarrival_scv: float = 1.0
    index: int = 0

    def __post_init__(self):
        if not self.relative_load > 0:
            raise InvalidInputError(f"flow {self.id}: relative load must be > 0")
        if self.headway.mean <= 0:
            raise InvalidInputError(f"flow {self.id}: headway mean must be > 0")
        if self.interarrival_scv < 0:
            raise InvalidInputError(f"flow {self.id}: interarrival scv must be >= 0")

    @property
    def rate(self) -> float:
        """Unscaled arrival rate ``rho_hat / E[B]`` (vehicles per second)."""
        return self.relative_load / self.headway.mean

    @property
    def interarrival(self) -> DistributionModel:
        """Unscaled interarrival law (total load 1)."""
        return DistributionModel(1.0 / self.rate, self.interarrival_scv)


@dataclass(frozen=True)
class GroupSpec:
    """Flows served simultaneously, stored by descending relative load.

    ``all_red`` is the clearance period that follows this group's green.
    """

    flows: tuple
    all_red: DistributionModel

    def __post_init__(self):
        if not self.flows:
            raise InvalidInputError("a group needs at least one flow")
        ordered = tuple(sorted(self.flows, key=lambda f: (-f.relative_load, f.index)))
        object.__setattr__(self, "flows", ordered)

    @property
    def load(self) -> float:
        return sum(f.relative_load for f in self.flows)

    @property
    def rate(self) -> float:
        return sum(f.rate for f in self.flows)

    @property
    def dominant(self) -> FlowSpec:
        return self.flows[0]


@dataclass(frozen=True)
class IntersectionSpec:
    groups: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise InvalidInputError("an intersection needs at least one group")
        ids = [f.id for g in self.groups for f in g.flows]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("each flow must belong to exactly one group")
        total = sum(g.load for g in self.groups)
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"relative loads must sum to 1, got {total!r}")

    @property
    def flows(self) -> tuple:
        """All flows in their original listing order."""
        return tuple(sorted((f for g in self.groups for f in g.flows), key=lambda f: f.index))

    @property
    def n_flows(self) -> int:
        return sum(len(g.flows) for g in self.groups)

    @property
    def L(self) -> float:
        return sum(g.dominant.relative_load for g in self.groups)

    def locate(self, flow) -> tuple:
        """Map a flow id (or an already-resolved ``(g, j)`` pair) to
        zero-based ``(group, position)``; position 0 is the dominant flow."""
        if isinstance(flow, tuple):
            g, j = flow
            self.groups[g].flows[j]
            return g, j
        for g, grp in enumerate(self.groups):
            for j, f in enumerate(grp.flows):
                if f.id == str(flow):
                    return g, j
        raise InvalidInputError(f"unknown flow {flow!r}")

    def flow(self, flow) -> FlowSpec:
        g, j = self.locate(flow)
        return self.groups[g].flows[j]


@dataclass(frozen=True)
class RawFlow:
    """Flow data as measured: rates in vehicles per hour."""

    id: str
    arrival_rate: float
    saturation_rate: float
    headway_scv: float = 1.0
    interarrival_scv: float = 1.0


@dataclass(frozen=True)
class RawGroup:
    flow_ids: Sequence[str]
    all_red: float
    all_red_scv: float = 0.0


def normalize_loads(flows: Sequence[RawFlow], groups: Sequence[RawGroup], name: str = ""):
    """Build an :class:`IntersectionSpec` from hourly rates.

    Returns ``(spec, rho_actual)`` where ``rho_actual`` is the total flow
    ratio of the raw data.
    """
    if not flows:
        raise InvalidInputError("no flows given")
    for f in flows:
        if not (f.arrival_rate > 0 and f.saturation_rate > 0):
            raise InvalidInputError(f"flow {f.id}: rates must be positive")
    ratios = [f.arrival_rate / f.saturation_rate for f in flows]
    rho_actual = math.fsum(ratios)
    relative = {f.id: r / rho_actual for f, r in zip(flows, ratios)}
    specs = {
        f.id: FlowSpec(str(f.id), relative[f.id], DistributionModel(3600.0 / f.saturation_rate, f.headway_scv),
                       f.interarrival_scv, index=i)
        for i, f in enumerate(flows)
    }
    return build_spec(specs, groups, name), rho_actual


def build_spec(flows_by_id: dict, groups: Sequence[RawGroup], name: str = "") -> IntersectionSpec:
    used = set()
    out = []
    for grp in groups:
        members = []
        for fid in grp.flow_ids:
            fid = str(fid)
            if fid not in flows_by_id:
                raise InvalidInputError(f"group references unknown flow {fid!r}")
            if fid in used:
                raise InvalidInputError(f"flow {fid} appears in more than one group")
            used.add(fid)
            members.append(flows_by_id[fid])
        out.append(GroupSpec(tuple(members), DistributionModel(grp.all_red, grp.all_red_scv)))
    missing = set(flows_by_id) - used
    if missing:
        raise InvalidInputError(f"flows not assigned to a group: {sorted(missing)}")
    return IntersectionSpec(tuple(out), name)


@dataclass(frozen=True)
class DerivedQuantities:
    spec: IntersectionSpec
    L: float
    delta: float
    sigma2: float
    sigma2_lemma1: float
    sigma2_corollary: float
    red_mean: np.ndarray  # E[R_g] per group
    red_var: np.ndarray
    red_residual: np.ndarray  # E[R_g^res]
    total_red: float  # E[R]
    total_red_residual: float  # E[R^res] of the summed all-red time
    mean_headway: float  # E[B], arbitrary vehicle
    mean_headway_residual: float  # E[B^res], arbitrary vehicle
    group_load: np.ndarray
    group_rate: np.ndarray
    dominant: tuple  # flow ids


def derive_quantities(spec: IntersectionSpec, sigma2: str = "lemma1") -> DerivedQuantities:
    """Constants shared by the light- and heavy-traffic formulas.

    ``sigma2`` selects the normalization of the workload variance: ``lemma1``
    divides the dominant-flow rates by ``L``, ``corollary`` does not.
    """
    for g, grp in enumerate(spec.groups):
        if not grp.load > 0:
            raise DegenerateGroupError(f"group {g + 1} carries no load")
        if len(grp.flows) > 1 and grp.flows[0].relative_load == grp.flows[1].relative_load:
            warnings.warn(
                f"group {g + 1}: tie for the dominant flow; using flow {grp.flows[0].id}",
                RuntimeWarning, stacklevel=2)
    L = spec.L
    ratios = np.array([grp.dominant.relative_load / L for grp in spec.groups])
    delta = float(np.sum(ratios * (1 - ratios)) / 2)
    terms = 0.0
    for grp in spec.groups:
        f = grp.dominant
        terms += f.rate * (f.headway.variance + f.relative_load ** 2 * f.interarrival.variance)
    s2_lemma1, s2_cor = terms / L, terms
    if sigma2 not in ("lemma1", "corollary"):
        raise InvalidInputError(f"unknown sigma2 variant {sigma2!r}")

    red_mean = np.array([grp.all_red.mean for grp in spec.groups])
    red_var = np.array([grp.all_red.variance for grp in spec.groups])
    red_res = np.array([grp.all_red.residual_mean for grp in spec.groups])
    total_red = float(red_mean.sum())
    total_red_res = (float(red_var.sum()) + total_red ** 2) / (2 * total_red) if total_red > 0 else 0.0

    flows = [f for grp in spec.groups for f in grp.flows]
    lam = sum(f.rate for f in flows)
    mean_b = 1.0 / lam
    second_b = sum(f.rate * f.headway.second_moment for f in flows) / lam
    return DerivedQuantities(
        spec=spec, L=L, delta=delta,
        sigma2=s2_lemma1 if sigma2 == "lemma1" else s2_cor,
        sigma2_lemma1=s2_lemma1, sigma2_corollary=s2_cor,
        red_mean=red_mean, red_var=red_var, red_residual=red_res,
        total_red=total_red, total_red_residual=total_red_res,
        mean_headway=mean_b, mean_headway_residual=second_b / (2 * mean_b),
        group_load=np.array([grp.load for grp in spec.groups]),
        group_rate=np.array([grp.rate for grp in spec.groups]),
        dominant=tuple(grp.dominant.id for grp in spec.groups),
    )


@dataclass(frozen=True)
class StabilityVerdict:
    status: str  # "stable" | "unstable" | "boundary"
    margin: float  # 1 - L * rho

    @property
    def stable(self) -> bool:
        return self.status == "stable"


def check_stability(spec: IntersectionSpec, rho: float, tol: float = 1e-12) -> StabilityVerdict:
    if rho < 0:
        raise InvalidInputError("rho must be nonnegative")
    margin = 1.0 - spec.L * rho
    if abs(margin) <= tol:
        return StabilityVerdict("boundary", margin)
    return StabilityVerdict("stable" if margin > 0 else "unstable", margin)


@dataclass(frozen=True)
class LoadedScenario:
    spec: IntersectionSpec
    rho: float
    rates: np.ndarray  # per flow in spec.flows order, vehicles per second
    loads: np.ndarray
    interarrivals: tuple  # scaled DistributionModel per flow

    @property
    def L_rho(self) -> float:
        return self.spec.L * self.rho


def scale(spec: IntersectionSpec, rho: float) -> LoadedScenario:
    """Scale interarrival times by ``1/rho``; headways and scvs are unchanged."""
    if not rho > 0:
        raise InvalidInputError("rho must be positive")
    flows = spec.flows
    return LoadedScenario(
        spec=spec, rho=rho,
        rates=np.array([rho * f.rate for f in flows]),
        loads=np.array([rho * f.relative_load for f in flows]),
        interarrivals=tuple(f.interarrival.scaled(1.0 / rho) for f in flows),
    )
