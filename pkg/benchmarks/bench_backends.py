"""Compare the compiled simulator kernel with the pure-Python fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time by POLLDELAY_DISABLE_NUMBA.  Prints vehicles per second for both
and checks that the replication means agree bit for bit.

    python3 benchmarks/bench_backends.py [--preset scenario-V] [--load 0.8] [--cycles 2000]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from polldelay import sim, _kernels
from polldelay.harness import load_config
from polldelay.model import scale

preset, load, cycles = sys.argv[1], float(sys.argv[2]), int(sys.argv[3])
spec = load_config(preset)
sc = scale(spec, load / spec.L)
cfg = sim.SimConfig(cycles, None, 3)
sim.run(sc, sim.SimConfig(300, 50, 1))  # compile / warm caches
t0 = time.perf_counter()
res = sim.run(sc, cfg)
dt = time.perf_counter() - t0
print(json.dumps({"backend": _kernels.BACKEND, "seconds": dt,
                  "vehicles": int(res.arrivals.sum()), "means": res.rep_means.tolist()}))
"""


def run(flag, args):
    env = dict(os.environ, POLLDELAY_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKER, args.preset, str(args.load), str(args.cycles)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--preset", default="scenario-V")
    p.add_argument("--load", type=float, default=0.8, help="L*rho")
    p.add_argument("--cycles", type=int, default=2000)
    args = p.parse_args()

    fast = run("0", args)
    slow = run("1", args)
    for r in (fast, slow):
        rate = r["vehicles"] / r["seconds"]
        print(f"{r['backend']:>7}: {r['seconds']:8.3f} s  {rate:12.0f} vehicles/s  "
              f"({1e9 / rate:.0f} ns per vehicle)")
    print(f"speed-up: {slow['seconds'] / fast['seconds']:.1f}x")
    same = fast["means"] == slow["means"]
    print("results identical" if same else "results DIFFER")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
