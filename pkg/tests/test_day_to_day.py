import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from conftest import make_net
from tollrl.day_to_day import (CostMemory, DegenerateChoice, NotInitialized,
                               apply_bounded_rationality, apply_inertial_choice,
                               baseline_from_waits, compute_baseline, evolve_one_day, init_state,
                               load_state, logit_shares, od_totals, perceived_costs,
                               run_to_convergence, save_state)
from tollrl.harness.scenarios import build_scenario_parallel
from tollrl.network import BehaviorParams, Bottleneck, ODPair, Route

costs = arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3))


def memory_of(*days, t_mem=5):
    m = CostMemory(t_mem)
    for c in days:
        m.push(np.array(c, dtype=np.float64))
    return m


def test_perceived_lambda_zero_is_yesterday():
    m = memory_of([[1.0, 2.0]], [[3.0, 4.0]])
    got = perceived_costs(m, BehaviorParams(lambda_mem=0.0))
    assert np.array_equal(got, [[3.0, 4.0]])


def test_perceived_weighted_example():
    m = memory_of([[10.0]], [[20.0]], t_mem=2)
    got = perceived_costs(m, BehaviorParams(lambda_mem=0.5, t_mem=2))
    assert got[0, 0] == pytest.approx(50.0 / 3.0, rel=1e-14)


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=8), st.floats(0.01, 1.0))
def test_perceived_matches_direct_average(hist, lam):
    m = memory_of(*([[c]] for c in hist), t_mem=8)
    got = perceived_costs(m, BehaviorParams(lambda_mem=lam, t_mem=8))[0, 0]
    assert got == pytest.approx(oracles.perceived(hist, lam), rel=1e-12, abs=1e-12)


@given(st.floats(-1e3, 1e3), st.floats(0.01, 1.0), st.integers(1, 6))
def test_perceived_constant_history(c, lam, n):
    m = memory_of(*([[c]] for _ in range(n)), t_mem=6)
    got = perceived_costs(m, BehaviorParams(lambda_mem=lam, t_mem=6))[0, 0]
    assert got == pytest.approx(c, rel=1e-12, abs=1e-12)


def test_perceived_empty_memory():
    with pytest.raises(NotInitialized):
        perceived_costs(CostMemory(3), BehaviorParams())


def test_memory_keeps_last_days():
    m = memory_of([[1.0]], [[2.0]], [[3.0]], t_mem=2)
    assert [float(c[0, 0]) for c in m.history] == [2.0, 3.0]


def test_logit_examples():
    rows = np.array([0])
    assert logit_shares(np.array([[5.0, 5.0]]), 0.05, rows).tolist() == [[0.5, 0.5]]
    p = logit_shares(np.array([[0.0, 1e6]]), 0.05, rows)
    assert p[0, 0] == pytest.approx(1.0, abs=1e-15) and p[0, 1] < 1e-300
    p = logit_shares(np.array([[10.0, 20.0, 30.0]]), 0.05, rows)
    ref = oracles.logit_mp([10.0, 20.0, 30.0], 0.05)
    assert np.allclose(p[0], ref, rtol=1e-14, atol=0)


def test_logit_degenerate():
    with pytest.raises(DegenerateChoice):
        logit_shares(np.array([[np.inf, np.inf]]), 0.05, np.array([0]))


def test_logit_selects_od_rows():
    c = np.array([[1.0, 2.0], [50.0, 50.0], [3.0, 4.0]])
    p = logit_shares(c, 0.1, np.array([0, 2]))
    assert p.shape == (2, 2)
    assert p.sum() == pytest.approx(1.0, abs=1e-15)


@given(costs, st.floats(0.001, 1.0), st.floats(-500, 500))
def test_logit_sums_to_one_and_shift_invariant(c, theta, shift):
    p = logit_shares(c[None], theta, np.array([0]))
    q = logit_shares((c + shift)[None], theta, np.array([0]))
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.allclose(p, oracles.logit_mp(c.tolist(), theta), rtol=1e-9, atol=1e-300)
    assert np.allclose(p, q, rtol=0, atol=1e-12)


def test_threshold_rule_examples():
    prev = np.array([60.0, 40.0])
    per = np.array([10.0, 20.0])
    shares = np.array([0.7, 0.3])
    assert np.array_equal(apply_bounded_rationality(prev, per, shares, 1e9), prev)
    nxt = apply_bounded_rationality(prev, per, shares, 5.0)
    # the 40 on the worse alternative move and split 0.7/0.3
    assert np.allclose(nxt, [60.0 + 28.0, 12.0])
    assert nxt.sum() == pytest.approx(100.0, abs=1e-12)


@given(arrays(np.float64, st.integers(1, 10), elements=st.floats(0, 50)),
       st.floats(0.001, 1.0), st.floats(0, 100), st.integers(0, 2**32 - 1))
def test_choice_rules_conserve_demand(prev, theta, delta, seed):
    rng = np.random.default_rng(seed)
    per = rng.uniform(0, 100, size=prev.shape)
    shares = logit_shares(per[None], theta, np.array([0]))[0]
    for nxt in (apply_bounded_rationality(prev, per, shares, delta),
                apply_inertial_choice(prev, per, theta, delta)):
        assert abs(nxt.sum() - prev.sum()) <= 1e-9 * max(1.0, prev.sum())
        assert np.all(nxt >= 0)


@given(arrays(np.float64, st.integers(1, 10), elements=st.floats(0, 50)), st.integers(0, 2**32 - 1))
def test_choice_rules_identity_for_huge_delta(prev, seed):
    per = np.random.default_rng(seed).uniform(0, 100, size=prev.shape)
    shares = logit_shares(per[None], 0.05, np.array([0]))[0]
    assert np.array_equal(apply_bounded_rationality(prev, per, shares, 1e9), prev)
    assert np.allclose(apply_inertial_choice(prev, per, 0.05, 1e9), prev, rtol=1e-12, atol=1e-12)


def test_inertial_zero_delta_is_logit():
    prev = np.array([10.0, 0.0, 5.0])
    per = np.array([3.0, 1.0, 2.0])
    got = apply_inertial_choice(prev, per, 0.5, 0.0)
    assert np.allclose(got, 15.0 * np.array(oracles.logit_mp(per.tolist(), 0.5)), rtol=1e-12)


def _one_route(demand, T=10, seg=(1, 1)):
    return make_net([Bottleneck(1, 2.0, True)], [Route(1, 1, (1,), seg)],
                    [ODPair(1, demand, (1,))], horizon=T, t_star=5)


def test_zero_demand_stays_empty():
    net = _one_route(0.0)
    state = init_state(net)
    for _ in range(3):
        dep, rec = evolve_one_day(state, net)
        assert not dep.any() and not rec.wait.any()
    res = run_to_convergence(init_state(net), net)
    assert res.converged and res.days_used == 1


def test_single_alternative_keeps_demand():
    net = _one_route(7.0, T=1, seg=(0, 0))
    state = init_state(net)
    for _ in range(4):
        dep, _ = evolve_one_day(state, net)
        assert dep.tolist() == [[7.0]]


def test_demand_is_conserved_through_days():
    net = build_scenario_parallel()
    state = init_state(net)
    for _ in range(20):
        dep, _ = evolve_one_day(state, net)
        assert od_totals(net, dep) == pytest.approx([od.demand for od in net.od_pairs], rel=1e-12)


def test_eps_must_be_positive():
    net = _one_route(1.0)
    with pytest.raises(ValueError):
        run_to_convergence(init_state(net), net, eps=0.0)


def test_evolve_requires_initialized_state():
    from tollrl.day_to_day import EvolutionState
    net = _one_route(1.0)
    with pytest.raises(NotInitialized):
        evolve_one_day(EvolutionState(np.zeros((1, 10)), CostMemory(3)), net)


def test_baseline_examples():
    b = baseline_from_waits([[0.0, 2.0, 4.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
    assert b.w0_sum.tolist() == [6.0, 0.0]
    assert b.nz_count.tolist() == [2, 0]
    assert b.norm[0] == 3.0 and np.isnan(b.norm[1])
    assert b.usable.tolist() == [True, False]


def test_parallel_converges_with_all_three_congested():
    net = build_scenario_parallel()
    res = run_to_convergence(init_state(net), net, eps=1e-3, max_days=2000)
    assert res.converged and res.days_used < 2000
    b = compute_baseline(net, res.state)
    assert b.congested_ids(net) == [1, 2, 3]
    # regression value from the calibration run
    assert b.total_wait == pytest.approx(295.904, rel=1e-4)


def test_parallel_waits_stable_after_long_run():
    net = build_scenario_parallel()
    state = init_state(net)
    waits = []
    for _ in range(500):
        waits.append(evolve_one_day(state, net)[1].total_wait)
    assert abs(waits[-1] - waits[-2]) / waits[-2] < 1e-3


def test_state_roundtrip(tmp_path):
    net = build_scenario_parallel()
    state = init_state(net)
    for _ in range(7):
        evolve_one_day(state, net)
    path = tmp_path / "state.npz"
    save_state(state, path)
    back = load_state(path)
    assert back.day == 7
    assert np.array_equal(back.departures, state.departures)
    assert all(np.array_equal(a, b) for a, b in zip(back.memory.history, state.memory.history))
    # continuing from the loaded state reproduces the original trajectory
    a = evolve_one_day(state, net)[1]
    b = evolve_one_day(back, net)[1]
    assert np.array_equal(a.wait, b.wait)
