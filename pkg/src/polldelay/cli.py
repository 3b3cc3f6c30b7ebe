"""Command-line entry point.

Every subcommand writes CSV to stdout (or ``--out``).  Exit status is 0 on
success, 2 on invalid input and 3 when the requested load is unstable.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

from . import fluid, harness, oracle, sim
from .errors import PollDelayError, UnstableLoadError
from .model import check_stability, derive_quantities, scale

EXIT_INVALID = 2
EXIT_UNSTABLE = 3


def _rho(spec, load: float) -> float:
    """Convert a requested ``L * rho`` into ``rho``."""
    rho = load / spec.L
    verdict = check_stability(spec, rho)
    if not verdict.stable:
        raise UnstableLoadError(f"L*rho = {load:g} is not below 1 (margin {verdict.margin:.3g})", verdict.margin)
    return rho


def _mode(text: str) -> str:
    return text.replace("-", "_")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in header])
    return buf.getvalue()


def cmd_analyze(a):
    spec = harness.load_config(a.config)
    opts = harness.ApproxOptions(order=a.order if a.order == "auto" else int(a.order), ht_formula=a.ht_formula,
                                 g0=a.g0, stay_empty=_mode(a.mode) == sim.STAY_EMPTY, sigma2=a.sigma2)
    return _table(harness.ANALYZE_HEADER, harness.analyze(spec, _rho(spec, a.load), opts))


def _sim_config(a, rho=None):
    return sim.SimConfig(cycles_per_replication=a.cycles, warmup_cycles=a.warmup, replications=a.reps,
                         root_seed=a.seed, mode=_mode(a.mode), rho=rho)


def cmd_simulate(a):
    spec = harness.load_config(a.config)
    rho = _rho(spec, a.load)
    return sim.run(scale(spec, rho), _sim_config(a)).to_csv()


def cmd_sweep(a):
    spec = harness.load_config(a.config)
    grid = tuple(float(x) for x in a.grid.split(",")) if a.grid else harness.DEFAULT_GRID
    sw = harness.SweepSpec(grid=grid, sim=_sim_config(a))
    report, rows = harness.sweep(spec, sw)
    print(f"QM1 = {report.qm1:.3f}% (flow {report.qm1_flow}, L*rho = {report.qm1_L_rho:g}); "
          f"QM2 = {report.qm2:.3f}%", file=sys.stderr)
    if report.noisy:
        print(f"noisy points (CI > 2% of mean): {len(report.noisy)}", file=sys.stderr)
    return harness.rows_to_csv(rows)


def cmd_oracle(a):
    spec = harness.load_config(a.config)
    rho = _rho(spec, a.load)
    c = oracle.CtmcSpec(spec, rho, cap=a.cap, mode=_mode(a.mode))
    delays = oracle.mean_delays_exact(c, max_states=a.max_states)
    rows = [{"flow_id": k, "rho": rho, "L_rho": a.load, "cap": a.cap, "mean_delay": v} for k, v in delays.items()]
    return _table(["flow_id", "rho", "L_rho", "cap", "mean_delay"], rows)


def cmd_fluid(a):
    spec = harness.load_config(a.config)
    dq = derive_quantities(spec)
    ids = [a.flow] if a.flow else [f.id for f in spec.flows]
    rows = []
    for fid in ids:
        tr = fluid.fluid_trajectory(dq, fid, a.cycle_length)
        rows += [{"flow_id": fid, "time": t, "workload": w} for t, w in zip(tr.times, tr.workload)]
    return _table(["flow_id", "time", "workload"], rows)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polldelay", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, load=True):
        sp.add_argument("--config", required=True, help="preset name or JSON file")
        if load:
            sp.add_argument("--load", type=float, required=True, help="L*rho")
        sp.add_argument("--out", help="write CSV here instead of stdout")

    def simopts(sp):
        sp.add_argument("--cycles", type=int, default=100_000)
        sp.add_argument("--warmup", type=int, default=None)
        sp.add_argument("--reps", type=int, default=10)
        sp.add_argument("--seed", type=int, default=12345)
        sp.add_argument("--mode", choices=["stay-empty", "refill"], default="stay-empty")

    sp = sub.add_parser("analyze", help="closed-form limits and approximation")
    common(sp)
    sp.add_argument("--order", choices=["auto", "1", "2"], default="auto")
    sp.add_argument("--ht-formula", choices=["theorem3", "corollary"], default="theorem3")
    sp.add_argument("--g0", choices=["whitt", "exact"], default="whitt")
    sp.add_argument("--sigma2", choices=["lemma1", "corollary"], default="lemma1")
    sp.add_argument("--mode", choices=["stay-empty", "refill"], default="stay-empty")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="simulate one load")
    common(sp)
    simopts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="simulation versus approximation over a load grid")
    common(sp, load=False)
    sp.add_argument("--grid", help="comma-separated L*rho values")
    simopts(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", help="exact Markov-chain mean delays")
    common(sp)
    sp.add_argument("--cap", type=int, default=6)
    sp.add_argument("--max-states", type=int, default=200_000)
    sp.add_argument("--mode", choices=["stay-empty", "refill"], default="stay-empty")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("fluid", help="fluid workload trajectories")
    common(sp, load=False)
    sp.add_argument("--flow")
    sp.add_argument("--cycle-length", type=float, default=1.0)
    sp.set_defaults(func=cmd_fluid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        text = args.func(args)
    except UnstableLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (PollDelayError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
