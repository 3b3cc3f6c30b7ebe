import json

import numpy as np
import pytest

from polldelay import harness, sim
from polldelay.errors import ConfigError, UnstableLoadError
from polldelay.model import derive_quantities

ROMAN = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"]


def test_preset_names():
    names = harness.preset_names()
    for r in ROMAN:
        assert f"scenario-{r}" in names
    for k in (1, 2, 3):
        assert f"intersection-{k}" in names
    assert "figure3-four-flow" in names


@pytest.mark.parametrize("name", harness.preset_names())
def test_presets_load(name):
    spec = harness.load_config(name)
    assert abs(sum(f.relative_load for f in spec.flows) - 1) < 1e-12
    derive_quantities(spec)


def test_intersection_two():
    spec = harness.load_config("intersection-2")
    assert spec.n_flows == 11
    groups = [sorted(int(f.id) for f in g.flows) for g in spec.groups]
    assert groups == [[1, 3, 9, 11], [2, 5], [4, 8], [6, 7, 10]]
    assert [g.all_red.mean for g in spec.groups] == [8, 1, 4, 6]


def test_scenario_iv():
    spec = harness.load_config("scenario-IV")
    groups = [sorted(int(f.id) for f in g.flows) for g in spec.groups]
    assert groups == [[1, 6], [2, 5], [3, 4]]
    for f in spec.flows:
        assert f.relative_load == pytest.approx(int(f.id) / 21, rel=1e-12)
        assert f.headway.scv == 1 and f.interarrival_scv == 1


def test_table2_variants():
    assert all(f.interarrival_scv == 0.5 for f in harness.load_config("scenario-VIII").flows)
    assert all(f.interarrival_scv == 2 for f in harness.load_config("scenario-IX").flows)
    for name, scv in (("scenario-X", 0.0), ("scenario-XI", 0.5), ("scenario-XII", 2.0)):
        spec = harness.load_config(name)
        assert all(f.headway.scv == scv for f in spec.flows)
        assert [sorted(int(f.id) for f in g.flows) for g in spec.groups] == [[1, 6], [2, 5], [3, 4]]


def test_bikes():
    spec = harness.load_config("intersection-1")
    bikes = [f for f in spec.flows if f.headway.mean == pytest.approx(0.36)]
    assert len(bikes) == 4
    assert all(f.headway.scv == 0 for f in bikes)


def test_figure3_preset():
    spec = harness.load_config("figure3-four-flow")
    assert [f.relative_load for f in spec.flows] == pytest.approx([0.1, 0.4, 0.1, 0.4])
    assert all(g.all_red.mean == 6 and g.all_red.scv == 1 for g in spec.groups)


def doc():
    return {"name": "t",
            "flows": [{"id": "a", "arrival_rate_per_hour": 300, "saturation_rate_per_hour": 1800},
                      {"id": "b", "arrival_rate_per_hour": 100, "saturation_rate_per_hour": 1800}],
            "groups": [{"flow_ids": ["a"], "all_red_seconds": 3},
                       {"flow_ids": ["b"], "all_red_seconds": 3}]}


def test_parse_rates():
    spec, rho = harness.parse_document(doc())
    assert rho == pytest.approx(400 / 1800)
    assert spec.flow("a").relative_load == pytest.approx(0.75)


def test_parse_relative():
    d = doc()
    d["flows"] = [{"id": "a", "relative_load": 0.6, "saturation_rate_per_hour": 1800},
                  {"id": "b", "relative_load": 0.4, "saturation_rate_per_hour": 1800}]
    spec, rho = harness.parse_document(d)
    assert rho is None and spec.flow("b").relative_load == 0.4


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d["flows"][1].pop("saturation_rate_per_hour"), "$.flows[1].saturation_rate_per_hour"),
    (lambda d: d["flows"][0].update(arrival_rate_per_hour=-5), "$.flows[0].arrival_rate_per_hour"),
    (lambda d: d["flows"][0].update(headway_scv="x"), "$.flows[0].headway_scv"),
    (lambda d: d["groups"][1].update(flow_ids=["zz"]), "$.groups[1].flow_ids[0]"),
    (lambda d: d["groups"][0].pop("all_red_seconds"), "$.groups[0].all_red_seconds"),
    (lambda d: d["flows"][1].update(id="a"), "$.flows[1].id"),
    (lambda d: d.pop("groups"), "$.groups"),
])
def test_schema_errors(mutate, path):
    d = doc()
    mutate(d)
    with pytest.raises(ConfigError) as e:
        harness.parse_document(d)
    assert e.value.path == path
    assert path in str(e.value)


def test_load_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps(doc()))
    assert harness.load_config(str(p)).n_flows == 2
    p.write_text("{broken")
    with pytest.raises(ConfigError):
        harness.load_config(str(p))
    with pytest.raises(ConfigError):
        harness.load_config("no-such-preset")


def test_analyze_zero_load():
    for r in ROMAN[:7]:
        rows = harness.analyze(harness.load_config(f"scenario-{r}"), 0.0)
        assert all(row["approx_mean"] == pytest.approx(8.0) for row in rows)


def test_analyze_scenario_v():
    spec = harness.load_config("scenario-V")
    rows = {r["flow_id"]: r for r in harness.analyze(spec, 0.9 / spec.L)}
    assert rows["6"]["ht_scaled_mean"] == pytest.approx(3.5, rel=1e-12)
    assert [rows[str(i)]["order"] for i in range(1, 7)] == [2, 2, 2, 1, 1, 1]
    assert list(rows["1"]) == harness.ANALYZE_HEADER


def test_analyze_intersection_three():
    spec = harness.load_config("intersection-3")
    assert len(harness.analyze(spec, 0.5 / spec.L)) == 10
    with pytest.raises(UnstableLoadError):
        harness.analyze(spec, 1.0 / spec.L)


def test_grid_validation():
    with pytest.raises(ConfigError):
        harness.SweepSpec(grid=(0.5, 1.0))
    with pytest.raises(ConfigError):
        harness.SweepSpec(grid=(0.0,))


def test_quality_by_hand():
    rows = [{"flow_id": "a", "L_rho": 0.1, "rel_err_pct": 1.0, "sim_mean": 10.0, "sim_ci": 0.1, "order": 1},
            {"flow_id": "a", "L_rho": 0.5, "rel_err_pct": 3.0, "sim_mean": 10.0, "sim_ci": 0.5, "order": 1},
            {"flow_id": "b", "L_rho": 0.1, "rel_err_pct": 6.0, "sim_mean": 10.0, "sim_ci": 0.1, "order": 2},
            {"flow_id": "b", "L_rho": 0.5, "rel_err_pct": 0.0, "sim_mean": 10.0, "sim_ci": 0.1, "order": 2}]
    q = harness.quality(rows, {"a": 3.0, "b": 1.0})
    assert (q.qm1, q.qm1_flow, q.qm1_L_rho) == (6.0, "b", 0.1)
    assert q.qm2 == pytest.approx(0.75 * 2.0 + 0.25 * 3.0)
    assert q.noisy == [("a", 0.5)]
    assert q.orders == {"a": 1, "b": 2}


@pytest.fixture(scope="module")
def small_sweep():
    spec = harness.load_config("scenario-V")
    sw = harness.SweepSpec(grid=(0.2, 0.6), sim=sim.SimConfig(3000, 300, 3))
    return spec, sw, harness.sweep(spec, sw)


def test_sweep_rows(small_sweep):
    spec, sw, (report, rows) = small_sweep
    assert len(rows) == 12
    for r in rows:
        assert r["rho"] * spec.L == pytest.approx(r["L_rho"], abs=1e-12)
        assert r["rel_err_pct"] >= 0
    assert report.qm2 <= report.qm1


def test_sweep_csv_roundtrip(small_sweep):
    spec, sw, (report, rows) = small_sweep
    text = harness.rows_to_csv(rows)
    assert text.splitlines()[0] == "flow_id,group,j,L_rho,rho,sim_mean,sim_ci,approx_mean,order,rel_err_pct"
    back = harness.rows_from_csv(text)
    again = harness.quality(back, harness.rate_weights(spec))
    assert again.qm1 == report.qm1 and again.qm2 == report.qm2
    assert again.qm1_flow == report.qm1_flow


def test_sweep_deterministic(small_sweep):
    spec, sw, (_, rows) = small_sweep
    _, rows2 = harness.sweep(spec, sw)
    assert harness.rows_to_csv(rows) == harness.rows_to_csv(rows2)


def test_refill_options():
    sw = harness.SweepSpec(sim=sim.SimConfig(mode=sim.REFILL))
    assert sw.options().stay_empty is False
    assert harness.with_sim(sw, replications=3).sim.replications == 3
