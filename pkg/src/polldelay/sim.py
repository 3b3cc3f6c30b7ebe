"""Discrete-event simulation of the grouped exhaustive-service intersection.

Each replication runs the compiled event loop in :mod:`polldelay._kernels`
on its own random stream, derived from ``(root_seed, replication index)``.
Replication means give the point estimates; Student-t intervals give the
95% confidence half-widths.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .distributions import CODE_NEVER
from .errors import InvalidInputError
from .model import IntersectionSpec, LoadedScenario

STAY_EMPTY = "stay_empty"
REFILL = "refill"
MODES = (STAY_EMPTY, REFILL)

CSV_HEADER = ["flow_id", "mode", "rho", "L_rho", "mean_delay", "ci_half_width",
              "p_last_departure", "samples"]


@dataclass(frozen=True)
class SimConfig:
    cycles_per_replication: int = 100_000
    warmup_cycles: int | None = None  # default: 10% of cycles, at least 200
    replications: int = 10
    root_seed: int = 12345
    mode: str = STAY_EMPTY
    rho: float | None = None  # only needed when running a bare spec
    horizon: float = math.inf

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.cycles_per_replication < 1:
            raise InvalidInputError("need at least one cycle per replication")
        if self.replications < 1:
            raise InvalidInputError("need at least one replication")
        if not self.warmup < self.cycles_per_replication:
            raise InvalidInputError("warm-up must be shorter than the run")

    @property
    def warmup(self) -> int:
        if self.warmup_cycles is not None:
            return self.warmup_cycles
        return min(max(self.cycles_per_replication // 10, 200), self.cycles_per_replication // 2)


@dataclass
class SimResult:
    flow_ids: tuple
    mode: str
    rho: float
    L_rho: float
    mean_delay: np.ndarray
    ci_half_width: np.ndarray
    p_last: np.ndarray  # per flow; sums to 1 within each group
    mean_cycle: float
    mean_green: np.ndarray  # per group
    arrivals: np.ndarray
    departures: np.ndarray
    pass_throughs: np.ndarray
    final_queue: np.ndarray
    samples: np.ndarray  # post-warm-up delay observations per flow
    rep_means: np.ndarray = field(repr=False)  # replications x flows

    def index(self, flow) -> int:
        return self.flow_ids.index(str(flow))

    def delay(self, flow) -> float:
        return float(self.mean_delay[self.index(flow)])

    def ci(self, flow) -> float:
        return float(self.ci_half_width[self.index(flow)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, fid in enumerate(self.flow_ids):
            w.writerow([fid, self.mode, f"{self.rho:.10g}", f"{self.L_rho:.10g}",
                        f"{self.mean_delay[i]:.10g}", f"{self.ci_half_width[i]:.10g}",
                        f"{self.p_last[i]:.10g}", int(self.samples[i])])
        return buf.getvalue()


@dataclass
class Trace:
    """Queue contents at the end of every cycle of one replication."""

    times: np.ndarray
    queues: np.ndarray  # cycles x flows, spec.flows order
    dominant_workload: np.ndarray  # sum over dominant flows of queue * E[B]
    final_queue: np.ndarray

    @property
    def total_queue(self) -> np.ndarray:
        return self.queues.sum(axis=1)


class EmpiricalCDF:
    def __init__(self, values):
        self.values = np.sort(np.asarray(values, dtype=float))

    def __len__(self):
        return len(self.values)

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / len(self.values)

    @property
    def atom(self) -> float:
        return float(np.mean(self.values == 0.0))

    def kolmogorov(self, cdf) -> float:
        """Sup distance to a (possibly atomic) reference CDF, checked on both
        sides of every jump of the empirical one."""
        v = np.unique(self.values)
        right = np.searchsorted(self.values, v, side="right") / len(self.values)
        left = np.searchsorted(self.values, v, side="left") / len(self.values)
        ref = np.asarray(cdf(v), dtype=float)
        # left limit of the reference at each point
        ref_left = np.asarray(cdf(np.nextafter(v, -np.inf)), dtype=float)
        return float(max(np.max(np.abs(right - ref)), np.max(np.abs(left - ref_left))))


def _kernel_arrays(spec: IntersectionSpec, rho: float):
    flows = [f for grp in spec.groups for f in grp.flows]
    F, M = len(flows), len(spec.groups)
    offsets = np.zeros(M + 1, np.int64)
    for g, grp in enumerate(spec.groups):
        offsets[g + 1] = offsets[g] + len(grp.flows)
    arr_code = np.empty(F, np.int64)
    arr_par = np.zeros((F, 3))
    hw_code = np.empty(F, np.int64)
    hw_par = np.zeros((F, 3))
    for i, f in enumerate(flows):
        if rho > 0:
            arr_code[i], *arr_par[i] = f.interarrival.scaled(1.0 / rho).fitted().kernel_params()
        else:
            arr_code[i] = CODE_NEVER
        hw_code[i], *hw_par[i] = f.headway.fitted().kernel_params()
    red_code = np.empty(M, np.int64)
    red_par = np.zeros((M, 3))
    for g, grp in enumerate(spec.groups):
        red_code[g], *red_par[g] = grp.all_red.fitted().kernel_params()
    # kernel position -> spec.flows position
    order = [f.index for f in flows]
    listing = [f.index for f in spec.flows]
    perm = np.array([listing.index(k) for k in order])
    return offsets, arr_code, arr_par, hw_code, hw_par, red_code, red_par, perm


def replication_seed(root_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence(root_seed, spawn_key=(rep,)).generate_state(1)[0])


def _resolve(scenario, config: SimConfig):
    if isinstance(scenario, LoadedScenario):
        return scenario.spec, scenario.rho
    if isinstance(scenario, IntersectionSpec):
        if config.rho is None:
            raise InvalidInputError("a bare spec needs config.rho")
        if config.rho < 0:
            raise InvalidInputError("rho must be nonnegative")
        return scenario, float(config.rho)
    raise InvalidInputError("scenario must be a LoadedScenario or IntersectionSpec")


def _call(spec, rho, config: SimConfig, rep: int, trace=False, rec_flow=-1, rec_stride=1, rec_cap=0):
    arrays = _kernel_arrays(spec, rho)
    offsets, arr_code, arr_par, hw_code, hw_par, red_code, red_par, perm = arrays
    out = _kernels.simulate(
        replication_seed(config.root_seed, rep), config.cycles_per_replication, config.warmup,
        float(config.horizon), offsets, arr_code, arr_par, hw_code, hw_par, red_code, red_par,
        config.mode == STAY_EMPTY, trace, rec_flow, rec_stride, rec_cap)
    return out, perm


def _t_half_width(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n < 2:
        return np.full(x.shape[1:], np.nan)
    return stats.t.ppf(0.975, n - 1) * x.std(axis=0, ddof=1) / math.sqrt(n)


def run(scenario, config: SimConfig = SimConfig()) -> SimResult:
    """Simulate ``config.replications`` independent replications."""
    spec, rho = _resolve(scenario, config)
    F, M = spec.n_flows, len(spec.groups)
    rep_means = np.full((config.replications, F), np.nan)
    tot = {k: np.zeros(F, np.int64) for k in ("served", "passed", "final", "samples")}
    last = np.zeros(F)
    greens_dep = np.zeros(M)
    green_time = np.zeros(M)
    n_green = np.zeros(M)
    span = cycles = 0.0
    for rep in range(config.replications):
        out, perm = _call(spec, rho, config, rep)
        delay_sum, n_delay, served, passed, final, last_dep, g_dep, g_time, g_n, st = out[:10]
        with np.errstate(invalid="ignore", divide="ignore"):
            rep_means[rep, perm] = np.where(n_delay > 0, delay_sum / np.maximum(n_delay, 1), np.nan)
        tot["served"][perm] += served
        tot["passed"][perm] += passed
        tot["final"][perm] += final
        tot["samples"][perm] += n_delay
        last[perm] += last_dep
        greens_dep += g_dep
        green_time += g_time
        n_green += g_n
        span += st[1] - st[0]
        cycles += st[3]

    mean = np.nanmean(rep_means, axis=0) if np.any(~np.isnan(rep_means)) else np.full(F, np.nan)
    ci = _t_half_width(rep_means)
    # p_{g,j}: share of greens with departures whose last departure was flow j
    p_last = np.zeros(F)
    for g, grp in enumerate(spec.groups):
        for f in grp.flows:
            i = [x.index for x in spec.flows].index(f.index)
            p_last[i] = last[i] / greens_dep[g] if greens_dep[g] else np.nan
    return SimResult(
        flow_ids=tuple(f.id for f in spec.flows), mode=config.mode, rho=rho, L_rho=spec.L * rho,
        mean_delay=mean, ci_half_width=ci, p_last=p_last,
        mean_cycle=span / cycles if cycles else float("nan"),
        mean_green=np.where(n_green > 0, green_time / np.maximum(n_green, 1), np.nan),
        arrivals=tot["served"] + tot["passed"] + tot["final"],
        departures=tot["served"], pass_throughs=tot["passed"], final_queue=tot["final"],
        samples=tot["samples"], rep_means=rep_means)


def run_trace(scenario, config: SimConfig, rep: int = 0) -> Trace:
    """One replication with the queue contents recorded at every cycle end.
    Warm-up is irrelevant here; set ``config.horizon`` for overloaded runs."""
    spec, rho = _resolve(scenario, config)
    out, perm = _call(spec, rho, config, rep, trace=True)
    final, times, q = out[4], out[10], out[11]
    queues = np.empty_like(q)
    queues[:, perm] = q
    fin = np.empty_like(final)
    fin[perm] = final
    idx = {f.index: i for i, f in enumerate(spec.flows)}
    dom = np.zeros(len(times))
    for grp in spec.groups:
        f = grp.dominant
        dom += queues[:, idx[f.index]] * f.headway.mean
    return Trace(times, queues, dom, fin)


def collect_delay_cdf(scenario, config: SimConfig, flow, max_samples: int = 200_000,
                      scaled: bool = True, stride: int | None = None) -> EmpiricalCDF:
    """Post-warm-up delays of one flow over all replications, multiplied by
    ``1 - L rho`` when ``scaled``.  Samples are thinned evenly so that at most
    ``max_samples`` are kept."""
    spec, rho = _resolve(scenario, config)
    g, j = spec.locate(flow)
    kpos = sum(len(spec.groups[m].flows) for m in range(g)) + j
    if stride is None:
        # a short pilot run estimates the cycle length and hence the count
        pilot_cycles = min(config.cycles_per_replication, 2 * config.warmup + 200)
        pilot = run(scenario, SimConfig(pilot_cycles, config.warmup, 1, config.root_seed,
                                        config.mode, rho, config.horizon))
        rate = rho * spec.groups[g].flows[j].rate
        expected = rate * pilot.mean_cycle * (config.cycles_per_replication - config.warmup) * config.replications
        stride = max(1, int(expected // max_samples) + 1)
    cap = max_samples // config.replications + 1
    values = []
    for rep in range(config.replications):
        out, _ = _call(spec, rho, config, rep, rec_flow=kpos, rec_stride=stride, rec_cap=cap)
        values.append(out[12])
    v = np.concatenate(values)
    if scaled:
        v = v * (1 - spec.L * rho)
    return EmpiricalCDF(v)
