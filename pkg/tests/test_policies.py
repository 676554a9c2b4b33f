from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eglb.errors import DomainError, InfeasibleError
from eglb.model import Allocation, DataCenterProfile, Scenario, SourceProfile, check_allocation
from eglb.policies import (
    greedy_allocation,
    init_policy,
    mirror_descent_update,
    observe,
    policy_step,
)
from eglb.synthetic import synthetic_scenario

from conftest import random_small_scenario


def test_init_uniform_duals(toy):
    assert np.allclose(init_policy("eglb", toy, 1.0, 0.5).mu, [0.5, 0.5])
    four = replace(toy, datacenters=toy.datacenters + tuple(replace(d, id=d.id + "b") for d in toy.datacenters))
    assert np.allclose(init_policy("eglb", four, 2.0).mu, [0.5] * 4)


def test_init_baseline(toy):
    st0 = init_policy("glb-cost", toy)
    assert st0.mu is None and st0.step == 0 and not st0.env_ledger.any()


def test_init_errors(toy):
    with pytest.raises(ValueError, match="unknown policy"):
        init_policy("glb-random", toy)
    with pytest.raises(DomainError):
        init_policy("eglb", toy, 1.0, eta=0.0)
    with pytest.raises(DomainError):
        init_policy("eglb", toy, -1.0)


def test_glb_cost_step(toy):
    x, new = policy_step(init_policy("glb-cost", toy), observe(toy, 0), toy)
    assert np.array_equal(x, [[10.0, 0.0]])
    assert new.step == 1
    assert np.allclose(new.env_ledger, [15.0, 0.0])


def test_eglb_step_with_skewed_duals(toy):
    state = replace(init_policy("eglb", toy, 1.0, eta=0.5), mu=np.array([0.0, 1.0]))
    x, new = policy_step(state, observe(toy, 0), toy)
    # scores: DC1 0.10 + 0 * 1.5, DC2 0.20 + 1 * 0.5
    assert np.array_equal(x, [[10.0, 0.0]])
    # a zero dual stays zero under a multiplicative update
    assert np.array_equal(new.mu, [0.0, 1.0])


def test_dual_update_softmax_value():
    # E = (15, 0) from routing all 10 requests to DC1, eta = 0.5, uniform prior
    out = mirror_descent_update([0.5, 0.5], 1.0, 0.5, [15.0, 0.0])
    mpmath.mp.dps = 50
    first = 1 / (1 + mpmath.e ** mpmath.mpf(-7.5))
    assert float(first) == pytest.approx(0.99945, abs=1e-5)
    assert out == pytest.approx([float(first), float(1 - first)], rel=1e-12)


def test_eglb_step_updates_duals_from_realized_env_cost(toy):
    state = init_policy("eglb", toy, 1.0, eta=0.5)
    x, new = policy_step(state, observe(toy, 0), toy)
    # uniform duals: DC1 0.10 + 0.5 * 1.5 = 0.85 > DC2 0.20 + 0.5 * 0.5 = 0.45
    assert np.array_equal(x, [[0.0, 10.0]])
    assert new.mu == pytest.approx(mirror_descent_update([0.5, 0.5], 1.0, 0.5, [0.0, 5.0]), rel=1e-15)
    assert np.allclose(new.env_ledger, [0.0, 5.0])


def test_glb_dist_spills_over_capacity():
    dcs = (DataCenterProfile("DC1", [0.1], [500], [2], [1]), DataCenterProfile("DC2", [0.2], [100], [1], [1], capacity=4))
    src = SourceProfile("S1", [10], {"DC1", "DC2"}, {"DC1": 800, "DC2": 50})
    sc = Scenario(dcs, (src,), 1, 1.0)
    x, _ = policy_step(init_policy("glb-dist", sc), observe(sc, 0), sc)
    assert np.array_equal(x, [[6.0, 4.0]])


def test_glb_carbon_prefers_clean(toy):
    x, _ = policy_step(init_policy("glb-carbon", toy), observe(toy, 0), toy)
    assert np.array_equal(x, [[0.0, 10.0]])


def test_ties_go_to_smaller_id():
    dcs = tuple(DataCenterProfile(d, [0.1], [100], [1], [1]) for d in ("b", "a"))
    sc = Scenario(dcs, (SourceProfile("s", [3], {"a", "b"}, {"a": 1, "b": 1}),), 1, 1.0)
    for kind in ("glb-cost", "glb-carbon", "glb-dist", "eglb"):
        x, _ = policy_step(init_policy(kind, sc, 1.0), observe(sc, 0), sc)
        assert np.array_equal(x, [[0.0, 3.0]])


def test_step_order_and_infeasibility(toy):
    with pytest.raises(ValueError, match="expects step 0"):
        policy_step(init_policy("glb-cost", toy), observe(toy, 1), toy)
    dcs = (DataCenterProfile("a", [0.1], [1], [1], [1], capacity=2),)
    sc = Scenario(dcs, (SourceProfile("s", [3], {"a"}, {"a": 0}),), 1, 1.0)
    with pytest.raises(InfeasibleError, match="step 0.*'s'") as info:
        policy_step(init_policy("glb-cost", sc), observe(sc, 0), sc)
    assert (info.value.step, info.value.source) == (0, "s")


# --- mirror update -----------------------------------------------------------

def test_mirror_update_reference():
    mpmath.mp.dps = 50
    e = mpmath.e
    out = mirror_descent_update([0.5, 0.5], 1.0, 1.0, [1.0, 0.0])
    assert out == pytest.approx([float(e / (e + 1)), float(1 / (e + 1))], rel=1e-14)
    assert out == pytest.approx([0.7311, 0.2689], abs=1e-4)


def test_mirror_update_symmetric_costs():
    mu = np.array([0.2, 0.3, 0.5])
    assert mirror_descent_update(mu, 1.0, 2.0, [4.0, 4.0, 4.0]) == pytest.approx(mu, rel=1e-14)


def test_mirror_update_tiny_step():
    mu = np.array([0.1, 0.6, 0.3])
    out = mirror_descent_update(mu, 1.0, 1e-12, [3.0, 0.0, 7.0])
    assert np.abs(out - mu).sum() <= 1e-10


def test_mirror_update_errors():
    with pytest.raises(DomainError, match="degenerate"):
        mirror_descent_update([0.0, 0.0], 1.0, 1.0, [1.0, 1.0])
    with pytest.raises(DomainError):
        mirror_descent_update([0.5, 0.5], 1.0, 0.0, [1, 1])
    with pytest.raises(DomainError):
        mirror_descent_update([0.5, 0.6], 1.0, 1.0, [1, 1])
    assert np.array_equal(mirror_descent_update([0.0, 0.0], 0.0, 1.0, [1, 2]), [0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(
    w=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=8).filter(lambda w: sum(w) > 1e-3),
    lam=st.floats(1e-3, 100),
    eta=st.floats(1e-6, 10),
    seed=st.integers(0, 2**31),
)
def test_mirror_update_stays_on_scaled_simplex(w, lam, eta, seed):
    mu = lam * np.array(w) / sum(w)
    e = np.random.default_rng(seed).uniform(0, 1e4, len(w))
    out = mirror_descent_update(mu, lam, eta, e)
    assert (out >= 0).all()
    assert abs(out.sum() - lam) <= 1e-9 * max(1.0, lam)


# --- run-level properties ------------------------------------------------------

def test_simplex_invariant_every_step():
    sc = synthetic_scenario(1, n_dc=6, n_src=3, horizon=48)
    for eta in (None, 0.05, 5.0):
        state = init_policy("eglb", sc, 2.5, eta)
        for t in range(sc.horizon):
            x, state = policy_step(state, observe(sc, t), sc)
            assert state.step == t + 1
            assert (state.mu >= 0).all() and abs(state.mu.sum() - 2.5) <= 1e-9


def test_every_slice_is_feasible():
    sc = synthetic_scenario(2, n_dc=6, n_src=4, horizon=24, reach=3)
    for kind in ("eglb", "glb-cost", "glb-carbon", "glb-dist"):
        x = greedy_allocation(sc, kind, 1.0)
        assert check_allocation(sc, Allocation(x)) == []


def test_lambda_zero_eglb_equals_glb_cost():
    rng = np.random.default_rng(0)
    for _ in range(20):
        sc = random_small_scenario(rng, capacity=False)
        assert np.array_equal(greedy_allocation(sc, "eglb", 0.0, 0.7), greedy_allocation(sc, "glb-cost"))
    sc = synthetic_scenario(3, horizon=48)
    assert np.array_equal(greedy_allocation(sc, "eglb", 0.0), greedy_allocation(sc, "glb-cost"))


def test_causality_prefix_decisions():
    """Scrambling the future leaves earlier decisions untouched."""
    sc = synthetic_scenario(4, n_dc=5, n_src=3, horizon=30)
    cut = 12
    rng = np.random.default_rng(1)
    perm = np.concatenate([np.arange(cut), cut + rng.permutation(sc.horizon - cut)])

    def permuted(values):
        return [values[k] for k in perm]

    dcs = tuple(replace(dc, price=permuted(dc.price), carbon_intensity=permuted(dc.carbon_intensity),
                        wue=permuted(dc.wue), ewif=permuted(dc.ewif), pue=permuted(dc.pue))
                for dc in sc.datacenters)
    srcs = tuple(replace(s, demand=permuted(s.demand)) for s in sc.sources)
    scrambled = replace(sc, datacenters=dcs, sources=srcs, env_norms=sc.env_norms)
    for kind in ("eglb", "glb-cost", "glb-carbon", "glb-dist"):
        a = greedy_allocation(sc, kind, 1.0, 0.2)
        b = greedy_allocation(scrambled, kind, 1.0, 0.2)
        assert np.array_equal(a[:cut], b[:cut])
        assert not np.array_equal(a, b) or kind == "glb-dist"
