import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eglb.errors import DimensionMismatchError
from eglb.model import Allocation, DataCenterProfile, Scenario, SourceProfile, check_allocation, validate_scenario
from eglb.sim import load_scenario

from conftest import split_toy


def _with_dc(sc, k, **changes):
    dcs = list(sc.datacenters)
    dcs[k] = replace(dcs[k], **changes)
    return replace(sc, datacenters=tuple(dcs))


def test_toy_is_valid(toy):
    assert validate_scenario(toy) == []


def test_pue_below_one_is_reported_with_location(toy):
    sc = _with_dc(toy, 1, pue=(1.0, 0.9))
    bad = validate_scenario(sc)
    assert len(bad) == 1
    v = bad[0]
    assert (v.dc, v.field, v.step) == ("DC2", "pue", 1)
    assert "DC2" in str(v) and "pue" in str(v) and "step 1" in str(v)


def test_aggregate_feasibility_names_the_step():
    T = 5
    dcs = tuple(DataCenterProfile(f"d{i}", [0.1] * T, [100] * T, [1] * T, [1.2] * T, capacity=10) for i in range(2))
    demand = [20, 20, 20, 25, 20]
    src = SourceProfile("s", demand, {"d0", "d1"}, {"d0": 1, "d1": 2})
    bad = validate_scenario(Scenario(dcs, (src,), T, 0.004))
    assert [(v.kind, v.step) for v in bad] == [("feasibility", 3)]
    assert "step 3" in str(bad[0])
    assert bad[0].magnitude == pytest.approx(5.0)


@pytest.mark.parametrize(
    "mutate, kind",
    [
        (lambda sc: _with_dc(sc, 0, price=(0.1, -0.1)), "range"),
        (lambda sc: _with_dc(sc, 0, wue=(2.0,)), "length"),
        (lambda sc: _with_dc(sc, 0, capacity=-1.0), "range"),
        (lambda sc: _with_dc(sc, 1, id="DC1"), "duplicate"),
        (lambda sc: replace(sc, energy_per_request=0.0), "constant"),
        (lambda sc: replace(sc, env_weights=(0.0, 0.0)), "constant"),
        (lambda sc: replace(sc, env_norms=(0.0, 1.0)), "constant"),
        (lambda sc: replace(sc, sources=(replace(sc.sources[0], allowed=frozenset()),)), "topology"),
        (lambda sc: replace(sc, sources=(replace(sc.sources[0], allowed=frozenset({"DC1", "DCX"})),)), "topology"),
        (lambda sc: replace(sc, sources=(replace(sc.sources[0], demand=(10.0, -1.0)),)), "range"),
    ],
)
def test_each_invariant_is_reported(toy, mutate, kind):
    bad = validate_scenario(mutate(toy))
    assert bad and kind in {v.kind for v in bad}


def test_scenario_is_immutable(toy):
    with pytest.raises(AttributeError):
        toy.horizon = 3
    with pytest.raises(ValueError):
        toy.price[0, 0] = 1.0


def test_identical_loads_compare_equal(toy_dir):
    assert load_scenario(toy_dir) == load_scenario(toy_dir)


def test_default_norms_are_fleet_means():
    dc = DataCenterProfile("a", [0.1, 0.1], [100, 300], [1.0, 3.0], [1, 1], ewif=[0.5, 0.5])
    src = SourceProfile("s", [1, 1], {"a"}, {"a": 0})
    sc = Scenario((dc,), (src,), 2, 1.0)
    assert sc.env_norms == (200.0, 2.5)


def test_dc_load_aggregates_sources(toy):
    x = np.arange(8, dtype=float).reshape(2, 2, 2)
    alloc = Allocation(x)
    assert np.array_equal(alloc.dc_load, x[:, 0, :] + x[:, 1, :])


def test_feasible_allocation_has_no_violations(toy):
    assert check_allocation(toy, Allocation(split_toy(5))) == []


def test_disallowed_route_is_reported():
    T = 1
    dcs = tuple(DataCenterProfile(f"d{i}", [0.1], [100], [1], [1]) for i in range(2))
    src = SourceProfile("s", [10], {"d0"}, {"d0": 1})
    sc = Scenario(dcs, (src,), T, 1.0)
    bad = check_allocation(sc, Allocation([[[9.0, 1.0]]]))
    assert [(v.kind, v.dc, v.magnitude) for v in bad] == [("allowed", "d1", 1.0)]


def test_conservation_gap_magnitude(toy):
    x = split_toy(5)
    x[1, 0, 1] -= 0.5
    bad = check_allocation(toy, Allocation(x))
    assert len(bad) == 1
    assert bad[0].kind == "conservation" and bad[0].step == 1
    assert bad[0].magnitude == pytest.approx(0.5)


def test_capacity_and_negativity(toy):
    sc = _with_dc(toy, 0, capacity=4.0)
    x = split_toy(10)  # 5 per step on DC1
    x[0, 0, 0], x[0, 0, 1] = 11.0, -1.0
    kinds = sorted(v.kind for v in check_allocation(sc, Allocation(x)))
    assert kinds == ["capacity", "capacity", "negativity"]


def test_shape_mismatch(toy):
    with pytest.raises(DimensionMismatchError, match="dimension mismatch.*\\(2, 1, 2\\).*\\(2, 2, 2\\)"):
        check_allocation(toy, Allocation(np.zeros((2, 2, 2))))


def test_unbounded_capacity_sentinel():
    dc = DataCenterProfile("a", [0.1], [1], [1], [1], capacity=None)
    assert math.isinf(dc.capacity)


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(0, 20),
    t=st.integers(0, 1),
    i=st.integers(0, 1),
    delta=st.floats(-5, 5).filter(lambda d: abs(d) > 1e-6),
    keep_sum=st.booleans(),
)
def test_perturbation_fuzz(toy, a, t, i, delta, keep_sum):
    """check_allocation is empty exactly when every allocation invariant holds."""
    x = split_toy(a)
    x[t, 0, i] += delta
    if keep_sum:
        x[t, 0, 1 - i] -= delta
    bad = check_allocation(toy, Allocation(x))
    sums_ok = np.allclose(x.sum(axis=2), toy.demand, rtol=0, atol=1e-9 * 10)
    expect_clean = bool((x >= 0).all() and sums_ok)
    assert (bad == []) == expect_clean
