import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polldelay import analytic, fluid
from polldelay.errors import InfiniteDrainError, InvalidInputError
from polldelay.model import (DistributionModel, FlowSpec, RawGroup, build_spec,
                             check_stability, derive_quantities)

from conftest import random_spec


def half_quarter():
    # L = 0.8; dominant share 0.5, flow b share 0.25
    flows = {k: FlowSpec(k, v, DistributionModel(2.0), index=i)
             for i, (k, v) in enumerate([("a", 0.4), ("b", 0.2), ("c", 0.4)])}
    return derive_quantities(build_spec(flows, [RawGroup(["a", "b"], 1.0), RawGroup(["c"], 1.0)]))


def test_parts_example():
    p = fluid.cycle_parts(half_quarter(), "b")
    assert (p.busy, p.idle_green, p.red) == pytest.approx((1 / 6, 1 / 3, 1 / 2), abs=1e-15)


def test_dominant_parts():
    dq = half_quarter()
    p = fluid.cycle_parts(dq, "a")
    assert p.idle_green == 0 and p.busy == pytest.approx(0.5)
    q = fluid.cycle_parts(dq, "b", 2.0)
    base = fluid.cycle_parts(dq, "b")
    assert (q.busy, q.idle_green, q.red) == pytest.approx((2 * base.busy, 2 * base.idle_green, 2 * base.red))


def test_bad_cycle():
    with pytest.raises(InvalidInputError):
        fluid.cycle_parts(half_quarter(), "a", 0.0)


def test_parts_property():
    rng = np.random.default_rng(31)
    for _ in range(40):
        spec = random_spec(rng)
        dq = derive_quantities(spec)
        c = float(rng.uniform(0.1, 100))
        for grp in spec.groups:
            r1 = grp.dominant.relative_load / dq.L
            for j, f in enumerate(grp.flows):
                p = fluid.cycle_parts(dq, f.id, c)
                assert p.busy + p.idle_green + p.red == pytest.approx(c, abs=1e-12 * c)
                assert min(p.busy, p.idle_green, p.red) >= 0
                assert p.red == pytest.approx((1 - r1) * c)
                assert (p.idle_green == 0) == (j == 0) or p.idle_green < 1e-12 * c


def test_delay_law_example():
    law = fluid.fluid_delay_law(half_quarter(), "b")
    assert law.atom == pytest.approx(1 / 3)
    assert law.red == pytest.approx(1 / 2)
    assert law.mean == pytest.approx(1 / 6)
    dom = fluid.fluid_delay_law(half_quarter(), "a")
    assert dom.atom == 0 and float(dom.cdf(0.25)) == pytest.approx(0.5)


def test_delay_law_small_flow_limit():
    flows = {k: FlowSpec(k, v, DistributionModel(2.0), index=i)
             for i, (k, v) in enumerate([("a", 0.5), ("b", 1e-9), ("c", 0.5 - 1e-9)])}
    dq = derive_quantities(build_spec(flows, [RawGroup(["a", "b"], 1.0), RawGroup(["c"], 1.0)]))
    law = fluid.fluid_delay_law(dq, "b")
    assert law.atom == pytest.approx(0.5 / dq.L, rel=1e-6)


def test_pieces_reassemble():
    grid = np.linspace(-0.1, 1.1, 1000)
    rng = np.random.default_rng(5)
    for _ in range(20):
        spec = random_spec(rng)
        dq = derive_quantities(spec)
        for f in spec.flows:
            pieces = fluid.fluid_delay_pieces(dq, f.id)
            assert sum(p for p, _, _ in pieces) == pytest.approx(1.0, abs=1e-14)
            law = fluid.fluid_delay_law(dq, f.id)
            diff = np.abs(fluid.pieces_cdf(pieces, grid) - law.cdf(grid))
            assert diff.max() <= 1e-12


def test_ht_law_is_fluid_law_with_random_red():
    rng = np.random.default_rng(6)
    for _ in range(20):
        spec = random_spec(rng)
        dq = derive_quantities(spec)
        for f in spec.flows:
            fl = fluid.fluid_delay_law(dq, f.id)
            ht = analytic.ht_delay_law(dq, f.id)
            assert ht.atom == pytest.approx(fl.atom, abs=1e-12)
            if fl.atom < 1:
                # conditional means: E[Gamma]/2 against P_R/2
                ratio = (ht.mean / (1 - ht.atom)) / (fl.mean / (1 - fl.atom))
                assert ratio == pytest.approx(ht.shape / ht.rate / fl.red, rel=1e-12)


def test_trajectory_examples():
    dq = half_quarter()
    tr = fluid.fluid_trajectory(dq, "a")
    assert tr.workload[0] == pytest.approx(0.5 * 0.5)
    assert tr.workload[-1] == pytest.approx(tr.workload[0])
    assert tr.mean() == pytest.approx(0.5 * 0.5 * 0.5 / 1)
    b = fluid.fluid_trajectory(dq, "b", 3.0)
    assert b.workload[0] == pytest.approx(0.25 * 0.5 * 3.0)
    assert b.workload[-1] == pytest.approx(b.workload[0])
    assert np.all(b.workload >= 0)


def test_trajectory_slopes():
    rng = np.random.default_rng(7)
    for _ in range(20):
        spec = random_spec(rng)
        dq = derive_quantities(spec)
        for f in spec.flows:
            rj = f.relative_load / dq.L
            p = fluid.cycle_parts(dq, f.id)
            tr = fluid.fluid_trajectory(dq, f.id)
            slopes = np.diff(tr.workload) / np.diff(tr.times)
            assert slopes[0] == pytest.approx(rj - 1)
            assert slopes[-1] == pytest.approx(rj)
            if p.idle_green > 0:
                assert slopes[1] == 0


def test_dominant_sum_flat():
    rng = np.random.default_rng(8)
    for _ in range(20):
        spec = random_spec(rng)
        dq = derive_quantities(spec)
        c = 5.0
        ts = np.linspace(0, c, 1001)
        total = np.zeros_like(ts)
        offset = 0.0
        for grp in spec.groups:
            total += fluid.fluid_trajectory_at(dq, grp.dominant.id, ts, c, offset)
            offset += grp.dominant.relative_load / dq.L * c
        assert np.ptp(total) <= 1e-12 * c


def test_trajectory_csv():
    text = fluid.fluid_trajectory(half_quarter(), "b").to_csv().splitlines()
    assert text[0] == "time,workload"
    assert len(text) == 5


# -- drain times and drift ----------------------------------------------------

def two_groups():
    flows = {k: FlowSpec(k, 0.5, DistributionModel(1.0), index=i) for i, k in enumerate("xy")}
    return build_spec(flows, [RawGroup(["x"], 0.0), RawGroup(["y"], 0.0)])


def test_drain_examples():
    spec = two_groups()
    mu = {"x": 1.0, "y": 1.0}
    lam = {"x": 0.25, "y": 0.25}
    assert fluid.drain_times(spec, {"x": 0.0, "y": 0.0}, lam, mu) == [0.0, 0.0]
    t = fluid.drain_times(spec, {"x": 1.0, "y": 0.0}, lam, mu)
    assert t == pytest.approx([4 / 3, 16 / 9], rel=1e-15)
    flows = {"z": FlowSpec("z", 1.0, DistributionModel(1.0), index=0)}
    one = build_spec(flows, [RawGroup(["z"], 0.0)])
    assert fluid.drain_times(one, {"z": 1.0}, {"z": 0.0}, {"z": 1.0}) == [1.0]


def test_drain_infinite():
    with pytest.raises(InfiniteDrainError):
        fluid.drain_times(two_groups(), {"x": 1.0}, {"x": 1.0, "y": 0.1}, {"x": 1.0, "y": 1.0})


@settings(max_examples=60)
@given(x=st.lists(st.floats(0, 10), min_size=2, max_size=2),
       lam=st.lists(st.floats(0, 0.9), min_size=2, max_size=2),
       bump=st.floats(0, 1), which=st.integers(0, 1))
def test_drain_monotone(x, lam, bump, which):
    spec = two_groups()
    mu = {"x": 1.0, "y": 1.0}
    xs = dict(zip("xy", x))
    ls = dict(zip("xy", lam))
    base = fluid.drain_times(spec, xs, ls, mu)
    k = "xy"[which]
    more = fluid.drain_times(spec, {**xs, k: xs[k] + bump}, ls, mu)
    assert all(b >= a for a, b in zip(base, more))
    faster = fluid.drain_times(spec, xs, {**ls, k: min(ls[k] + bump, 0.95)}, mu)
    assert all(b >= a - 1e-15 for a, b in zip(base, faster))


def test_drift(scenario_v):
    assert fluid.fluid_drift(scenario_v, 7 / 3) == pytest.approx(0.0, abs=1e-15)
    assert fluid.fluid_drift(scenario_v, 2.0) == pytest.approx(-1 / 7)
    assert fluid.fluid_drift(scenario_v, 2.5) == pytest.approx(1 / 14)
    for rho in (0.5, 2.0, 2.5, 3.0):
        assert (fluid.fluid_drift(scenario_v, rho) < 0) == check_stability(scenario_v, rho).stable
