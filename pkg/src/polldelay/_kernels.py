"""Event loop of the intersection simulator.

The functions here are written in the numba-compatible subset of Python.
They are compiled with ``numba.njit`` unless ``POLLDELAY_DISABLE_NUMBA`` is
set to a true value, in which case the same code runs as plain Python (slow,
but useful for debugging and for the backend benchmark).

Random numbers come from the legacy Mersenne Twister that both numba and
numpy expose as ``np.random``; every replication reseeds it, so a run owns
its stream for its whole duration.

Flow arrays are laid out group by group, dominant flow first; ``offsets``
holds the first flow index of every group plus a final sentinel.
"""
import math
import os

import numpy as np

_FLAG = os.environ.get("POLLDELAY_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _FLAG in ("", "0", "false", "no")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if USE_NUMBA:
    def _jit(fn=None, **kw):
        if fn is None:
            return lambda f: njit(cache=True, **kw)(f)
        return njit(cache=True)(fn)
else:
    def _jit(fn=None, **kw):
        if fn is None:
            return lambda f: f
        return fn

BACKEND = "numba" if USE_NUMBA else "python"


@_jit(inline="always")
def draw(code, a, b, c):
    """One variate of a fitted law; see ``FittedDistribution.kernel_params``."""
    if code == 0:
        return a
    if code == 1:
        return -a * math.log(1.0 - np.random.random())
    if code == 2:
        n = int(b) - 1 if np.random.random() < a else int(b)
        s = 0.0
        for _ in range(n):
            s -= math.log(1.0 - np.random.random())
        return s / c
    if code == 3:
        rate = b if np.random.random() < a else c
        return -math.log(1.0 - np.random.random()) / rate
    return math.inf


@_jit
def _grow(buf, head, cnt):
    """Double the ring capacity, unrolling every ring to start at 0."""
    F, cap = buf.shape
    bigger = np.empty((F, 2 * cap))
    for r in range(F):
        for i in range(cnt[r]):
            bigger[r, i] = buf[r, (head[r] + i) & (cap - 1)]
        head[r] = 0
    return bigger


@_jit(inline="always")
def _fill(buf, head, cnt, next_arr, arr_code, arr_par, f, upto):
    """Move arrivals of flow ``f`` up to time ``upto`` into its ring.
    Returns False when the ring is full (caller grows it and retries)."""
    mask = buf.shape[1] - 1
    while next_arr[f] <= upto:
        if cnt[f] > mask:
            return False
        buf[f, (head[f] + cnt[f]) & mask] = next_arr[f]
        cnt[f] += 1
        next_arr[f] += draw(arr_code[f], arr_par[f, 0], arr_par[f, 1], arr_par[f, 2])
    return True


@_jit
def simulate(seed, n_cycles, warmup, horizon, offsets, arr_code, arr_par,
             hw_code, hw_par, red_code, red_par, stay_empty, trace,
             rec_flow, rec_stride, rec_cap):
    np.random.seed(seed)
    F = arr_code.shape[0]
    M = offsets.shape[0] - 1

    buf = np.empty((F, 64))  # one ring per flow; capacity a power of two
    head = np.zeros(F, np.int64)
    cnt = np.zeros(F, np.int64)
    next_arr = np.empty(F)
    for f in range(F):
        next_arr[f] = draw(arr_code[f], arr_par[f, 0], arr_par[f, 1], arr_par[f, 2])

    zero_reds = True
    for g in range(M):
        if not (red_code[g] == 0 and red_par[g, 0] == 0.0):
            zero_reds = False

    delay_sum = np.zeros(F)
    n_delay = np.zeros(F, np.int64)
    served = np.zeros(F, np.int64)
    passed = np.zeros(F, np.int64)
    last_dep = np.zeros(F, np.int64)
    greens_dep = np.zeros(M, np.int64)
    green_time = np.zeros(M)
    n_green = np.zeros(M, np.int64)
    empty_end = np.zeros(F)
    busy = np.zeros(F)
    n_trace = n_cycles if trace else 0
    tr_time = np.zeros(n_trace)
    tr_queue = np.zeros((n_trace, F))
    rec = np.zeros(rec_cap)
    n_rec = 0
    rec_seen = 0

    t = 0.0
    t_warm = 0.0
    cycle = 0
    while cycle < n_cycles and t < horizon:
        counting = cycle >= warmup
        if cycle == warmup:
            t_warm = t
        for g in range(M):
            lo = offsets[g]
            hi = offsets[g + 1]
            if zero_reds:
                idle = True
                for f in range(F):
                    if cnt[f] > 0 or next_arr[f] <= t:
                        idle = False
                if idle:
                    soonest = math.inf
                    for f in range(F):
                        soonest = min(soonest, next_arr[f])
                    if soonest == math.inf:
                        # nothing will ever arrive
                        cycle = n_cycles
                        break
                    t = soonest
            start = t
            green_end = t
            any_dep = False
            for f in range(lo, hi):
                busy[f] = start
                empty_end[f] = -1.0
            # serve every flow until it first empties
            progress = True
            first_pass = True
            while progress:
                progress = False
                for f in range(lo, hi):
                    horizon_f = busy[f] if (stay_empty or first_pass) else max(busy[f], green_end)
                    while True:
                        while not _fill(buf, head, cnt, next_arr, arr_code, arr_par, f, horizon_f):
                            buf = _grow(buf, head, cnt)
                        if cnt[f] == 0:
                            break
                        a = buf[f, head[f]]
                        head[f] = (head[f] + 1) & (buf.shape[1] - 1)
                        cnt[f] -= 1
                        s = busy[f] if busy[f] > a else a
                        d = s + draw(hw_code[f], hw_par[f, 0], hw_par[f, 1], hw_par[f, 2])
                        busy[f] = d
                        empty_end[f] = d
                        served[f] += 1
                        progress = True
                        any_dep = True
                        if counting:
                            delay_sum[f] += d - a
                            n_delay[f] += 1
                            if f == rec_flow:
                                rec_seen += 1
                                if rec_seen % rec_stride == 0 and n_rec < rec_cap:
                                    rec[n_rec] = d - a
                                    n_rec += 1
                        horizon_f = busy[f] if (stay_empty or first_pass) else max(busy[f], green_end)
                    if busy[f] > green_end:
                        green_end = busy[f]
                first_pass = False
                if stay_empty:
                    break
            if stay_empty:
                # flows that cleared let later green arrivals straight through
                for f in range(lo, hi):
                    while next_arr[f] <= green_end:
                        passed[f] += 1
                        if counting:
                            n_delay[f] += 1
                            if f == rec_flow:
                                rec_seen += 1
                                if rec_seen % rec_stride == 0 and n_rec < rec_cap:
                                    rec[n_rec] = 0.0
                                    n_rec += 1
                        next_arr[f] += draw(arr_code[f], arr_par[f, 0], arr_par[f, 1], arr_par[f, 2])
            if counting:
                n_green[g] += 1
                green_time[g] += green_end - start
                if any_dep:
                    greens_dep[g] += 1
                    best = -1
                    for f in range(lo, hi):
                        if empty_end[f] >= 0.0 and (best < 0 or empty_end[f] > empty_end[best]):
                            best = f
                    last_dep[best] += 1
            t = green_end + draw(red_code[g], red_par[g, 0], red_par[g, 1], red_par[g, 2])
        if cycle >= n_cycles:
            break
        if trace:
            for f in range(F):
                while not _fill(buf, head, cnt, next_arr, arr_code, arr_par, f, t):
                    buf = _grow(buf, head, cnt)
                tr_queue[cycle, f] = cnt[f]
            tr_time[cycle] = t
        cycle += 1

    final = np.zeros(F, np.int64)
    for f in range(F):
        while not _fill(buf, head, cnt, next_arr, arr_code, arr_par, f, t):
            buf = _grow(buf, head, cnt)
        final[f] = cnt[f]
    if cycle <= warmup:
        t_warm = t
    stats = np.array([t_warm, t, float(cycle), float(max(cycle - warmup, 0))])
    return (delay_sum, n_delay, served, passed, final, last_dep, greens_dep,
            green_time, n_green, stats, tr_time[:min(cycle, n_trace)],
            tr_queue[:min(cycle, n_trace)], rec[:n_rec])
