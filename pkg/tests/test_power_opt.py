import math

import numpy as np
import pytest

from twrelay.power_opt import (
    BisectionError,
    PowerSolverConfig,
    optimal_power,
    quartic_coefficients,
    quartic_residual,
    refine_tuple_powers,
    solve_power,
)
from twrelay.rate_model import TupleContext, rate, rate_slope

from conftest import random_context


def interior_case(rng, cap=10.0):
    """Random (ctx, lam, w) whose optimum lies strictly inside (0, cap)."""
    while True:
        ctx = random_context(rng)
        w = rng.uniform(0.2, 3.0)
        coeffs = ctx.coefficients()
        hi = w * float(rate_slope(0.0, *coeffs))
        lo = w * float(rate_slope(cap, *coeffs))
        if hi <= lo * 1.01:
            continue
        lam = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        return ctx, lam, w


def fd_slope(ctx, p):
    h = 1e-6 * max(p, 1.0)
    coeffs = ctx.coefficients()
    return float((rate(p + h, *coeffs) - rate(p - h, *coeffs)) / (2 * h))


def printed_block(ctx: TupleContext, lam, w):
    """Coefficient block as commonly printed (approximate form)."""
    gu, gd = ctx.gain_hb, ctx.gain_fb
    xu, xd = ctx.p_u * ctx.gain_fm, ctx.p_b * ctx.gain_hm
    m, l2 = ctx.m, math.log(2)
    a = 2 * l2 * lam * gu ** 2 * gd ** 2 / m
    b = 4 * l2 * lam * gu * gd * (gd + gu)
    c = 2 * m * l2 * lam * (gu ** 2 + gd ** 2 + 4 * gu * gd) - w * gu * gd * (xu * gd + xd * gu)
    d = 4 * m ** 2 * l2 * lam * (gd + gu) - 2 * w * m * gu * gd * (xu + xd)
    e = 2 * m ** 3 * l2 * lam - w * m ** 2 * (xu * gu + xd * gd)
    return [a, b, c, d, e]


def test_zero_weight_gives_zero_power(rng):
    for _ in range(50):
        assert optimal_power(random_context(rng), 0.5, 0.0, PowerSolverConfig(p_cap=10)) == 0.0


def test_zero_price_gives_cap(rng):
    for _ in range(50):
        assert optimal_power(random_context(rng), 0.0, 1.0, PowerSolverConfig(p_cap=7.0)) == 7.0


def test_beats_grid_and_is_stationary(rng):
    for _ in range(300):
        ctx, lam, w = interior_case(rng)
        cfg = PowerSolverConfig(p_cap=10.0)
        p = optimal_power(ctx, lam, w, cfg)
        grid = np.linspace(0, 10.0, 1000)
        coeffs = ctx.coefficients()
        best = np.max(w * rate(grid, *coeffs) - lam * grid)
        assert w * float(rate(p, *coeffs)) - lam * p >= best - 1e-9
        assert 0 < p < 10.0
        assert abs(w * fd_slope(ctx, p) - lam) <= 1e-6 * lam


def test_quartic_root_is_the_optimum(rng):
    for _ in range(300):
        ctx, lam, w = interior_case(rng)
        p = optimal_power(ctx, lam, w, PowerSolverConfig(p_cap=10.0))
        assert quartic_residual(quartic_coefficients(ctx, lam, w), p) <= 1e-6


def test_quartic_matches_polynomial_roots(rng):
    ctx, lam, w = interior_case(rng)
    p = optimal_power(ctx, lam, w, PowerSolverConfig(p_cap=10.0))
    roots = np.roots(quartic_coefficients(ctx, lam, w))
    real = roots[np.abs(roots.imag) < 1e-9].real
    positive = real[real > 0]
    assert positive.size == 1
    assert positive[0] == pytest.approx(p, rel=1e-7)


def test_printed_block_agrees_only_in_constant_term(rng):
    ctx, lam, w = interior_case(rng)
    exact = quartic_coefficients(ctx, lam, w) / ctx.m
    printed = printed_block(ctx, lam, w)
    assert printed[-1] == pytest.approx(exact[-1], rel=1e-12)
    scale = (1 + ctx.p_u * ctx.gain_fm) * (1 + ctx.p_b * ctx.gain_hm)
    assert exact[0] == pytest.approx(printed[0] * scale, rel=1e-12)


def test_printed_block_misses_the_optimum(rng):
    residuals = []
    for _ in range(200):
        ctx, lam, w = interior_case(rng)
        p = optimal_power(ctx, lam, w, PowerSolverConfig(p_cap=10.0))
        residuals.append(quartic_residual(printed_block(ctx, lam, w), p))
    assert np.median(residuals) > 1e-3


def test_nonincreasing_in_price(rng):
    lams = np.logspace(-4, 2, 60)
    for _ in range(200):
        ctx = random_context(rng)
        p = solve_power(ctx.coefficients(), lams, 1.0, 10.0, 1e-8)
        assert np.all(np.diff(p) <= 1e-8)


def test_vectorised_matches_scalar(rng):
    ctxs = [random_context(rng) for _ in range(40)]
    lam = 10 ** rng.uniform(-3, 0, size=40)
    coeffs = tuple(np.array(c) for c in zip(*(c.coefficients() for c in ctxs)))
    vec = solve_power(coeffs, lam, 1.0, 5.0, 5e-9)
    scalar = [optimal_power(c, l, 1.0, PowerSolverConfig(p_cap=5.0)) for c, l in zip(ctxs, lam)]
    np.testing.assert_allclose(vec, scalar, rtol=0, atol=1e-15)


def test_iteration_cap_is_enforced():
    ctx = TupleContext(0, 0, 0, 0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    cfg = PowerSolverConfig(p_cap=10.0, root_tol=1e-12, max_bisect_iters=5)
    with pytest.raises(BisectionError):
        optimal_power(ctx, 0.05, 1.0, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        PowerSolverConfig(p_cap=0.0)
    with pytest.raises(ValueError):
        PowerSolverConfig(p_cap=1.0, root_tol=-1.0)
    assert PowerSolverConfig(p_cap=4.0).root_tol == pytest.approx(4e-9)


# -- refinement ---------------------------------------------------------------

def stacked(ctxs):
    return tuple(np.array(c) for c in zip(*(c.coefficients() for c in ctxs)))


def test_refine_slack_single_tuple(rng):
    ctx, lam, w = interior_case(rng, cap=10.0)
    # an expensive-enough floor keeps the optimum inside the budget
    floor = lam
    p, mu = refine_tuple_powers(stacked([ctx]), [w], [0], [10.0], lambda_floor=floor)
    expected = optimal_power(ctx, floor, w, PowerSolverConfig(p_cap=10.0, lambda_floor=floor))
    assert p[0] == pytest.approx(expected, abs=1e-8)
    assert mu[0] == floor


def test_refine_empty_relay_is_unused():
    p, mu = refine_tuple_powers(stacked([TupleContext(0, 0, 0, 0, 1, 1, 1, 1, 1, 1)]),
                                [1.0], [1], [5.0, 5.0])
    assert p[0] == pytest.approx(5.0)
    assert mu[0] == pytest.approx(1e-8)


def test_refine_identical_tuples_share_equally(rng):
    ctx = random_context(rng)
    p, _ = refine_tuple_powers(stacked([ctx, ctx]), [1.0, 1.0], [0, 0], [6.0])
    assert p[0] == pytest.approx(p[1], abs=6e-9)
    assert p.sum() == pytest.approx(6.0, rel=1e-6)


def simplex_best(ctxs, weights, budget, step):
    n = int(round(budget / step))
    coeffs = [c.coefficients() for c in ctxs]
    best = -np.inf
    n2, n3 = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    n2, n3 = n2.ravel(), n3.ravel()
    r2 = weights[1] * rate(n2 * step, *coeffs[1])
    r3 = weights[2] * rate(n3 * step, *coeffs[2])
    for n1 in range(n + 1):
        ok = n2 + n3 <= n - n1
        total = weights[0] * float(rate(n1 * step, *coeffs[0])) + r2[ok] + r3[ok]
        best = max(best, float(total.max()))
    return best


def test_refine_matches_simplex_grid(rng):
    for _ in range(3):
        ctxs = [random_context(rng) for _ in range(3)]
        weights = rng.uniform(0.5, 2.0, size=3)
        p, _ = refine_tuple_powers(stacked(ctxs), weights, [0, 0, 0], [5.0])
        value = sum(w * float(rate(pk, *c.coefficients())) for w, pk, c in zip(weights, p, ctxs))
        grid = simplex_best(ctxs, weights, 5.0, 0.01)
        assert value >= grid * (1 - 1e-3)
        assert value <= grid * (1 + 1e-3)


def test_refine_equal_marginals_and_feasibility(rng):
    for _ in range(50):
        T, K = 12, 3
        ctxs = [random_context(rng) for _ in range(T)]
        relay = rng.integers(0, K, size=T)
        weights = rng.uniform(0.5, 2.0, size=T)
        budgets = rng.uniform(0.5, 20.0, size=K)
        p, mu = refine_tuple_powers(stacked(ctxs), weights, relay, budgets)
        used = np.bincount(relay, weights=p, minlength=K)
        assert np.all(used <= budgets * (1 + 1e-6))
        for k in range(K):
            members = np.flatnonzero(relay == k)
            if members.size == 0:
                continue
            binding = used[k] >= budgets[k] * (1 - 1e-6)
            if not binding:
                continue
            active = [t for t in members if 0 < p[t] < budgets[k]]
            marg = [weights[t] * float(rate_slope(p[t], *ctxs[t].coefficients())) for t in active]
            for v in marg:
                assert v == pytest.approx(mu[k], rel=1e-4)
