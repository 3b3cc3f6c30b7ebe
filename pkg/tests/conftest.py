import numpy as np
import pytest

from polldelay.model import (DistributionModel, FlowSpec, RawFlow, RawGroup,
                             build_spec, normalize_loads)


def example_one(groups, red_total=12.0, headway_scv=1.0, interarrival_scv=1.0, red_scv=0.0):
    """Six flows with arrival ratios 1:...:6 and 2 s mean headways."""
    flows = [RawFlow(str(i), 100.0 * i, 1800.0, headway_scv, interarrival_scv) for i in range(1, 7)]
    rg = [RawGroup([str(x) for x in g], red_total / len(groups), red_scv) for g in groups]
    return normalize_loads(flows, rg)[0]


@pytest.fixture
def scenario_v():
    return example_one([[1, 2, 3], [4, 5, 6]])


def figure3_spec():
    flows = {str(i + 1): FlowSpec(str(i + 1), r, DistributionModel(2.0, 1.0), 1.0, i)
             for i, r in enumerate([0.1, 0.4, 0.1, 0.4])}
    return build_spec(flows, [RawGroup(["1", "2"], 6.0, 1.0), RawGroup(["3", "4"], 6.0, 1.0)])


@pytest.fixture
def four_flow():
    return figure3_spec()


def random_spec(rng: np.random.Generator, exp_arrivals=False, random_reds=True, min_groups=2, max_groups=4):
    """A valid intersection with distinct loads inside every group."""
    M = int(rng.integers(min_groups, max_groups + 1))
    sizes = rng.integers(1, 4, size=M)
    n = int(sizes.sum())
    loads = rng.uniform(0.2, 1.0, size=n)
    loads /= loads.sum()
    flows = {}
    for i in range(n):
        hw = DistributionModel(float(rng.uniform(1.0, 4.0)), float(rng.choice([0.0, 0.3, 0.5, 1.0, 2.0, 3.0])))
        ia = 1.0 if exp_arrivals else float(rng.choice([0.0, 0.25, 0.5, 1.0, 1.5, 4.0]))
        flows[str(i + 1)] = FlowSpec(str(i + 1), float(loads[i]), hw, ia, i)
    groups = []
    k = 1
    for s in sizes:
        mean = float(rng.uniform(1.0, 8.0))
        scv = float(rng.choice([0.0, 0.5, 1.0, 2.0])) if random_reds else 0.0
        groups.append(RawGroup([str(x) for x in range(k, k + s)], mean, scv))
        k += s
    return build_spec(flows, groups, "random")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
