import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twrelay.assignment import Allocation, build_profit_matrix, pairing_objective, solve_pairing
from twrelay.channel import NetworkConfig, realization
from twrelay.power_opt import PowerSolverConfig, optimal_power
from twrelay.rate_model import TupleContext, profit

from oracles import brute_force_pairing


def objective(values, alloc):
    return math.fsum(np.asarray(values)[alloc.mac, alloc.bc])


def test_diagonal_dominant_identity():
    n = 6
    values = np.ones((n, n)) + 9 * np.eye(n)
    alloc = solve_pairing(values)
    assert sorted(zip(alloc.mac, alloc.bc)) == [(i, i) for i in range(n)]
    assert objective(values, alloc) == 10 * n


def test_all_negative_gives_empty():
    alloc = solve_pairing(-np.ones((4, 4)) - np.random.default_rng(0).random((4, 4)))
    assert len(alloc) == 0
    assert objective(np.zeros((4, 4)), alloc) == 0


def test_zero_cells_are_dropped():
    values = np.array([[0.0, -1.0], [-1.0, 2.0]])
    alloc = solve_pairing(values)
    assert list(zip(alloc.mac, alloc.bc)) == [(1, 1)]


def test_matches_brute_force_six(rng):
    for _ in range(200):
        values = rng.normal(size=(6, 6))
        alloc = solve_pairing(values)
        assert objective(values, alloc) == brute_force_pairing(values)


square = st.integers(1, 5).flatmap(
    lambda n: arrays(float, (n, n), elements=st.floats(-10, 10, allow_nan=False)))


@settings(max_examples=150, deadline=None)
@given(square)
def test_optimal_and_feasible(values):
    alloc = solve_pairing(values)
    assert len(set(alloc.mac)) == len(alloc) and len(set(alloc.bc)) == len(alloc)
    assert np.all(values[alloc.mac, alloc.bc] > 0)
    assert objective(values, alloc) == pytest.approx(brute_force_pairing(values), abs=1e-9)


def test_scale_invariance(rng):
    for _ in range(100):
        values = rng.normal(size=(7, 7))
        first = solve_pairing(values)
        base = set(zip(first.mac.tolist(), first.bc.tolist()))
        for c in (0.5, 3.0, 1e3):
            alloc = solve_pairing(values * c)
            assert set(zip(alloc.mac.tolist(), alloc.bc.tolist())) == base


def test_raising_unselected_cell(rng):
    # Raising one unused cell by delta moves the optimum by at most delta,
    # and any new solution must use that cell.
    for _ in range(200):
        values = rng.uniform(0.1, 1.0, size=(5, 5))
        alloc = solve_pairing(values)
        chosen = set(zip(alloc.mac.tolist(), alloc.bc.tolist()))
        floor = values[alloc.mac, alloc.bc].min()
        free = [(i, j) for i in range(5) for j in range(5)
                if (i, j) not in chosen and values[i, j] < floor]
        if not free:
            continue
        i, j = free[rng.integers(len(free))]
        delta = rng.uniform(0, floor - values[i, j])
        bumped = values.copy()
        bumped[i, j] += delta
        new = solve_pairing(bumped)
        before, after = objective(values, alloc), objective(bumped, new)
        assert before - 1e-12 <= after <= before + delta + 1e-12
        new_set = set(zip(new.mac.tolist(), new.bc.tolist()))
        assert new_set == chosen or (i, j) in new_set


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        solve_pairing(np.array([[np.nan]]))


# -- profit matrix ------------------------------------------------------------

def brute_force_cell(channels, config, lam, i, j):
    M, K, _ = channels.dims
    best, arg = -np.inf, None
    for u in range(M):
        for k in range(K):
            ctx = TupleContext.from_channels(channels, config, u, k, i, j)
            cfg = PowerSolverConfig(p_cap=config.rs_power_budget[k])
            p = optimal_power(ctx, lam[k], config.ms_weights[u], cfg)
            x = profit(ctx, lam[k], config.ms_weights[u], p)
            if x > best:
                best, arg = x, (u, k, p)
    return best, arg


def test_profit_matrix_matches_per_cell_enumeration():
    config = NetworkConfig.from_db(2, 2, 2, ms_weights=(1.0, 1.5))
    for seed in range(5):
        channels = realization(config, seed)
        lam = np.array([0.05, 0.2])
        matrix = build_profit_matrix(channels, config, lam)
        assert matrix.values.shape == (2, 2)
        for i in range(2):
            for j in range(2):
                best, (u, k, p) = brute_force_cell(channels, config, lam, i, j)
                assert matrix.values[i, j] == pytest.approx(best, rel=1e-12, abs=1e-14)
                assert (matrix.argmax_ms[i, j], matrix.argmax_rs[i, j]) == (u, k)
                assert matrix.power[i, j] == pytest.approx(p, rel=1e-12, abs=1e-14)


def test_profit_matrix_recomputes_from_stored_indices():
    config = NetworkConfig.from_db(3, 2, 4)
    channels = realization(config, 3)
    lam = np.array([0.1, 0.3])
    matrix = build_profit_matrix(channels, config, lam)
    for i in range(4):
        for j in range(4):
            u, k = matrix.argmax_ms[i, j], matrix.argmax_rs[i, j]
            ctx = TupleContext.from_channels(channels, config, u, k, i, j)
            again = profit(ctx, lam[k], config.ms_weights[u], matrix.power[i, j])
            assert again == pytest.approx(matrix.values[i, j], rel=1e-13, abs=1e-15)


def test_single_ms_single_rs():
    config = NetworkConfig.from_db(1, 1, 3)
    matrix = build_profit_matrix(realization(config, 0), config, [0.1])
    assert np.all(matrix.argmax_ms == 0) and np.all(matrix.argmax_rs == 0)


def test_identical_mobiles_tie_to_lowest_index():
    config = NetworkConfig.from_db(2, 1, 3)
    ch = realization(config, 4)
    f_mac = ch.f_mac.copy()
    f_mac[1] = f_mac[0]
    f_bc = ch.f_bc.copy()
    f_bc[:, 1] = f_bc[:, 0]
    twin = type(ch)(h_mac=ch.h_mac, f_mac=f_mac, h_bc=ch.h_bc, f_bc=f_bc)
    swapped = type(ch)(h_mac=ch.h_mac, f_mac=f_mac[::-1].copy(), h_bc=ch.h_bc,
                       f_bc=f_bc[:, ::-1].copy())
    a = build_profit_matrix(twin, config, [0.1])
    b = build_profit_matrix(swapped, config, [0.1])
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(a.argmax_ms == 0) and np.all(b.argmax_ms == 0)


def test_allocation_helpers():
    alloc = Allocation.from_tuples([(0, 1, 0, 2, 1.5), (1, 1, 2, 0, 0.5)])
    assert alloc.active_tuples == [(0, 1, 0, 2, 1.5), (1, 1, 2, 0, 0.5)]
    np.testing.assert_allclose(alloc.relay_power(2), [0.0, 2.0])
    alloc.check_feasible([1.0, 2.0])
    with pytest.raises(ValueError):
        alloc.check_feasible([1.0, 1.9])
    with pytest.raises(ValueError):
        Allocation.from_tuples([(0, 0, 1, 0, 1.0), (0, 0, 1, 1, 1.0)]).check_feasible([5.0])
    assert len(Allocation.empty()) == 0
    assert pairing_objective(np.arange(9.0).reshape(3, 3), alloc) == 2.0 + 6.0
