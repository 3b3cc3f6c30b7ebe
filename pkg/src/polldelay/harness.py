"""Configuration documents, bundled presets, load sweeps and the
approximation-versus-simulation quality measures.

A configuration document looks like::

    {"name": "...",
     "flows": [{"id": "1", "arrival_rate_per_hour": 280,
                "saturation_rate_per_hour": 1800,
                "headway_scv": 1, "interarrival_scv": 1}, ...],
     "groups": [{"flow_ids": ["1", "5"], "all_red_seconds": 5,
                 "all_red_scv": 0}, ...]}

Flows give either ``arrival_rate_per_hour`` (all of them) or
``relative_load`` (all of them, summing to one).  Groups are listed in
cyclic service order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import analytic, sim
from .errors import ConfigError, InvalidInputError, UnstableLoadError
from .model import (DistributionModel, FlowSpec, IntersectionSpec, RawFlow,
                    RawGroup, build_spec, check_stability, derive_quantities,
                    normalize_loads, scale)

log = logging.getLogger(__name__)

DEFAULT_GRID = (0.001, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)
SWEEP_HEADER = ["flow_id", "group", "j", "L_rho", "rho", "sim_mean", "sim_ci",
                "approx_mean", "order", "rel_err_pct"]
ANALYZE_HEADER = ["flow_id", "group", "j", "rho", "L_rho", "lt_value", "lt_at_zero", "lt_slope",
                  "ht_scaled_mean", "order", "K0", "K1", "K2", "approx_mean"]
NOISE_LIMIT = 0.02  # CI half-width relative to the mean above which a point is flagged


def preset_names() -> list:
    files = resources.files("polldelay.presets").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


# -- configuration --------------------------------------------------------

def _number(obj, key, path, required=True, default=None, positive=False, nonneg=False):
    if key not in obj:
        if required:
            raise ConfigError("missing field", f"{path}.{key}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {v!r}", f"{path}.{key}")
    if positive and not v > 0:
        raise ConfigError(f"must be > 0, got {v!r}", f"{path}.{key}")
    if nonneg and v < 0:
        raise ConfigError(f"must be >= 0, got {v!r}", f"{path}.{key}")
    return float(v)


def parse_document(doc: dict):
    """Validate a configuration document; returns ``(spec, rho_actual)``
    where ``rho_actual`` is None for relative-load input."""
    if not isinstance(doc, dict):
        raise ConfigError("document must be an object", "$")
    flows = doc.get("flows")
    groups = doc.get("groups")
    if not isinstance(flows, list) or not flows:
        raise ConfigError("expected a nonempty list", "$.flows")
    if not isinstance(groups, list) or not groups:
        raise ConfigError("expected a nonempty list", "$.groups")
    name = str(doc.get("name", ""))

    by_rate = [("arrival_rate_per_hour" in f) if isinstance(f, dict) else None for f in flows]
    raw, rel = [], {}
    seen = set()
    for i, f in enumerate(flows):
        path = f"$.flows[{i}]"
        if not isinstance(f, dict):
            raise ConfigError("expected an object", path)
        if "id" not in f:
            raise ConfigError("missing field", f"{path}.id")
        fid = str(f["id"])
        if fid in seen:
            raise ConfigError(f"duplicate flow id {fid!r}", f"{path}.id")
        seen.add(fid)
        if by_rate[i] != by_rate[0]:
            raise ConfigError("all flows must use the same load field", path)
        sat = _number(f, "saturation_rate_per_hour", path, positive=True)
        hw = _number(f, "headway_scv", path, required=False, default=1.0, nonneg=True)
        ia = _number(f, "interarrival_scv", path, required=False, default=1.0, nonneg=True)
        if by_rate[i]:
            raw.append(RawFlow(fid, _number(f, "arrival_rate_per_hour", path, positive=True), sat, hw, ia))
        else:
            load = _number(f, "relative_load", path, positive=True)
            rel[fid] = FlowSpec(fid, load, DistributionModel(3600.0 / sat, hw), ia, index=i)

    rgroups = []
    for i, g in enumerate(groups):
        path = f"$.groups[{i}]"
        if not isinstance(g, dict):
            raise ConfigError("expected an object", path)
        ids = g.get("flow_ids")
        if not isinstance(ids, list) or not ids:
            raise ConfigError("expected a nonempty list", f"{path}.flow_ids")
        for k, fid in enumerate(ids):
            if str(fid) not in seen:
                raise ConfigError(f"unknown flow {fid!r}", f"{path}.flow_ids[{k}]")
        red = _number(g, "all_red_seconds", path, nonneg=True)
        rscv = _number(g, "all_red_scv", path, required=False, default=0.0, nonneg=True)
        if red == 0 and rscv != 0:
            raise ConfigError("a zero all-red time must have scv 0", f"{path}.all_red_scv")
        rgroups.append(RawGroup([str(x) for x in ids], red, rscv))

    try:
        if by_rate[0]:
            return normalize_loads(raw, rgroups, name)
        return build_spec(rel, rgroups, name), None
    except ConfigError:
        raise
    except InvalidInputError as e:
        raise ConfigError(str(e), "$") from e


def load_document(source):
    """Load a preset name or a JSON file; returns ``(spec, rho_actual)``."""
    src = str(source)
    if src in preset_names():
        text = resources.files("polldelay.presets").joinpath(src + ".json").read_text()
    else:
        p = Path(src)
        if not p.is_file():
            raise ConfigError(f"no such file or preset: {src!r}")
        text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} at line {e.lineno}", "$") from e
    return parse_document(doc)


def load_config(source) -> IntersectionSpec:
    return load_document(source)[0]


# -- analysis table -------------------------------------------------------

@dataclass(frozen=True)
class ApproxOptions:
    order: object = "auto"
    ht_formula: str = "theorem3"
    g0: str = "whitt"
    stay_empty: bool = True
    sigma2: str = "lemma1"


def _order_for(spec, flow, opts: ApproxOptions) -> int:
    return analytic.select_order(spec, flow) if opts.order == "auto" else int(opts.order)


def analyze(spec: IntersectionSpec, rho: float, opts: ApproxOptions = ApproxOptions()) -> list:
    """One row per flow (listing order) with the limits, constants and the
    approximate mean delay at total load ``rho``."""
    verdict = check_stability(spec, rho)
    if not verdict.stable:
        raise UnstableLoadError(f"L*rho = {spec.L * rho:.6g} is not below 1 (margin {verdict.margin:.3g})",
                                verdict.margin)
    dq = derive_quantities(spec, opts.sigma2)
    rows = []
    for f in spec.flows:
        g, j = spec.locate(f.id)
        order = _order_for(spec, f.id, opts)
        k = analytic.interpolation_constants(spec, f.id, order, ht_formula=opts.ht_formula, g0=opts.g0,
                                             stay_empty=opts.stay_empty, sigma2=opts.sigma2)
        rows.append({
            "flow_id": f.id, "group": g + 1, "j": j + 1, "rho": rho, "L_rho": spec.L * rho,
            "lt_value": k.lt_value + k.lt_slope * rho, "lt_at_zero": k.lt_value, "lt_slope": k.lt_slope,
            "ht_scaled_mean": analytic.ht_scaled_mean(dq, (g, j), opts.ht_formula),
            "order": order, "K0": k.K0, "K1": k.K1, "K2": k.K2,
            "approx_mean": k.numerator(rho) / (1 - spec.L * rho),
        })
    return rows


# -- sweeps ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    grid: tuple = DEFAULT_GRID  # values of L * rho
    sim: sim.SimConfig = field(default_factory=sim.SimConfig)
    approx: ApproxOptions | None = None  # None: stay_empty follows the simulation mode

    def __post_init__(self):
        for x in self.grid:
            if not 0 < x < 1:
                raise ConfigError(f"grid value {x!r} is not in (0, 1)", "grid")

    def options(self) -> ApproxOptions:
        if self.approx is not None:
            return self.approx
        return ApproxOptions(stay_empty=self.sim.mode == sim.STAY_EMPTY)


@dataclass
class QualityReport:
    qm1: float
    qm1_flow: str
    qm1_L_rho: float
    qm2: float
    mean_errors: dict  # flow id -> mean relative error over the grid (percent)
    orders: dict  # flow id -> interpolation order used
    noisy: list  # (flow id, L_rho) points whose simulation CI exceeds 2% of the mean


def quality(rows: list, weights: dict) -> QualityReport:
    """QM1 (largest relative error) and QM2 (arrival-rate weighted mean of
    the per-flow average errors) from sweep rows."""
    if not rows:
        raise InvalidInputError("no rows")
    errs = {}
    worst = max(rows, key=lambda r: r["rel_err_pct"])
    for r in rows:
        errs.setdefault(r["flow_id"], []).append(r["rel_err_pct"])
    mean_err = {k: float(np.mean(v)) for k, v in errs.items()}
    total = sum(weights[k] for k in mean_err)
    qm2 = sum(weights[k] / total * e for k, e in mean_err.items())
    noisy = [(r["flow_id"], r["L_rho"]) for r in rows if r["sim_ci"] > NOISE_LIMIT * r["sim_mean"]]
    return QualityReport(worst["rel_err_pct"], worst["flow_id"], worst["L_rho"], qm2, mean_err,
                         {r["flow_id"]: r["order"] for r in rows}, noisy)


def rate_weights(spec: IntersectionSpec) -> dict:
    return {f.id: f.rate for f in spec.flows}


def sweep(spec: IntersectionSpec, sw: SweepSpec = SweepSpec()):
    """Simulate and approximate every flow at every grid load.  Returns
    ``(QualityReport, rows)``."""
    opts = sw.options()
    rows = []
    for x in sw.grid:
        rho = x / spec.L
        log.info("%s: L*rho = %g", spec.name or "spec", x)
        res = sim.run(scale(spec, rho), sw.sim)
        for f in spec.flows:
            g, j = spec.locate(f.id)
            order = _order_for(spec, f.id, opts)
            approx = analytic.approx_mean_delay(spec, rho, f.id, order, ht_formula=opts.ht_formula, g0=opts.g0,
                                                stay_empty=opts.stay_empty, sigma2=opts.sigma2)
            w = res.delay(f.id)
            rows.append({"flow_id": f.id, "group": g + 1, "j": j + 1, "L_rho": x, "rho": rho,
                         "sim_mean": w, "sim_ci": res.ci(f.id), "approx_mean": approx, "order": order,
                         "rel_err_pct": abs(approx - w) / w * 100.0})
    return quality(rows, rate_weights(spec)), rows


def rows_to_csv(rows: list, header=SWEEP_HEADER) -> str:
    """Floats are written with ``repr`` so that reading the table back gives
    the identical numbers."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else r[k] for k in header])
    return buf.getvalue()


def rows_from_csv(text: str) -> list:
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        out.append({"flow_id": r["flow_id"], "group": int(r["group"]), "j": int(r["j"]),
                    "L_rho": float(r["L_rho"]), "rho": float(r["rho"]), "sim_mean": float(r["sim_mean"]),
                    "sim_ci": float(r["sim_ci"]), "approx_mean": float(r["approx_mean"]),
                    "order": int(r["order"]), "rel_err_pct": float(r["rel_err_pct"])})
    return out


def with_sim(sw: SweepSpec, **changes) -> SweepSpec:
    return replace(sw, sim=replace(sw.sim, **changes))
