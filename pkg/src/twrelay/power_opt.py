"""Relay power for a priced tuple, and per-relay power refinement.

For a fixed price ``lam`` the tuple objective ``w R(p) - lam p`` is concave,
so its maximiser on ``[0, p_cap]`` is where the decreasing slope
``w R'(p) - lam`` changes sign. The sign change is located by bisection,
finished with a secant step inside the last bracket.
Clearing denominators in ``w R'(p) = lam`` gives a quartic in ``p``; its
coefficients are exposed by :func:`quartic_coefficients` for cross-checking
but the solver never roots the quartic directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from twrelay.rate_model import LN2, TupleContext, rate_slope

__all__ = [
    "PowerSolverConfig",
    "BisectionError",
    "solve_power",
    "optimal_power",
    "quartic_coefficients",
    "quartic_residual",
    "refine_tuple_powers",
    "refine_powers",
]

DEFAULT_LAMBDA_FLOOR = 1e-8
DEFAULT_ROOT_RTOL = 1e-9
DEFAULT_MAX_BISECT = 200


class BisectionError(RuntimeError):
    """The bracket could not be shrunk to tolerance within the iteration cap."""


@dataclass(frozen=True)
class PowerSolverConfig:
    p_cap: float
    root_tol: float | None = None
    max_bisect_iters: int = DEFAULT_MAX_BISECT
    lambda_floor: float = DEFAULT_LAMBDA_FLOOR

    def __post_init__(self):
        if self.root_tol is None:
            object.__setattr__(self, "root_tol", DEFAULT_ROOT_RTOL * self.p_cap)
        if not self.p_cap > 0:
            raise ValueError("p_cap must be positive")
        if not self.root_tol > 0:
            raise ValueError("root_tol must be positive")
        if not self.lambda_floor > 0:
            raise ValueError("lambda_floor must be positive")
        if self.max_bisect_iters < 1:
            raise ValueError("max_bisect_iters must be positive")


def _iterations_needed(p_cap, root_tol) -> int:
    ratio = float(np.max(np.asarray(p_cap, dtype=float) / np.asarray(root_tol, dtype=float)))
    return max(1, math.ceil(math.log2(ratio)))


def solve_power(coeffs, lam, w, p_cap, root_tol, *,
                max_bisect_iters: int = DEFAULT_MAX_BISECT,
                lambda_floor: float = DEFAULT_LAMBDA_FLOOR) -> np.ndarray:
    """Vectorised argmax of ``w R(p) - lam p`` over ``[0, p_cap]``.

    ``coeffs`` is the ``(a_up, g_up, a_dn, g_dn, m)`` tuple; every argument
    broadcasts against it. Prices below ``lambda_floor`` are raised to it.
    """
    lam = np.maximum(np.asarray(lam, dtype=float), lambda_floor)
    w = np.asarray(w, dtype=float)
    shape = np.broadcast_shapes(np.shape(coeffs[0]), lam.shape, w.shape, np.shape(p_cap))
    p_cap = np.broadcast_to(np.asarray(p_cap, dtype=float), shape)

    def excess(p):
        return w * rate_slope(p, *coeffs) - lam

    at_zero = np.broadcast_to(excess(0.0), shape)
    at_cap = np.broadcast_to(excess(p_cap), shape)
    out = np.where(at_cap >= 0.0, p_cap, 0.0)
    interior = (at_zero > 0.0) & (at_cap < 0.0)
    if not interior.any():
        return out

    n_iter = _iterations_needed(p_cap, root_tol)
    if n_iter > max_bisect_iters:
        raise BisectionError(
            f"bisection needs {n_iter} iterations, cap is {max_bisect_iters}")
    sub = tuple(np.broadcast_to(c, shape)[interior] for c in coeffs)
    w_i = np.broadcast_to(w, shape)[interior]
    lam_i = np.broadcast_to(lam, shape)[interior]
    lo = np.zeros_like(w_i)
    hi = p_cap[interior].copy()
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        up = w_i * rate_slope(mid, *sub) > lam_i
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    # One secant step inside the final bracket: it cannot leave the bracket
    # and recovers relative accuracy for roots much smaller than p_cap.
    f_lo = w_i * rate_slope(lo, *sub) - lam_i
    f_hi = w_i * rate_slope(hi, *sub) - lam_i
    span = f_lo - f_hi
    frac = np.divide(f_lo, span, out=np.full_like(span, 0.5), where=span > 0)
    out[interior] = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
    return out


def optimal_power(ctx: TupleContext, lambda_k: float, w_u: float,
                  cfg: PowerSolverConfig) -> float:
    if not (lambda_k >= 0 and w_u >= 0):
        raise ValueError("lambda_k and w_u must be nonnegative")
    p = solve_power(ctx.coefficients(), lambda_k, w_u, cfg.p_cap, cfg.root_tol,
                    max_bisect_iters=cfg.max_bisect_iters,
                    lambda_floor=cfg.lambda_floor)
    return float(p)


def quartic_coefficients(ctx: TupleContext, lambda_k: float, w_u: float) -> np.ndarray:
    """Coefficients ``[a, b, c, d, e]`` (highest power first) of the
    stationarity quartic.

    With ``D_up = ((g_up + a_up) p + m)(g_up p + m)`` and ``D_dn`` alike, the
    condition ``w R'(p) = lam`` is

        2 ln2 lam D_up D_dn - w m (a_up D_dn + a_dn D_up) = 0.

    A common shortcut replaces ``(g + a) p + m`` by ``g p + m``, which drops
    the ``(1 + p_u|f_mac|^2)(1 + p_b|h_mac|^2)`` factor from the leading
    coefficient; the roots of that reduced quartic are not the optimum.
    """
    a_up, g_up, a_dn, g_dn, m = ctx.coefficients()
    d_up = np.polymul([g_up + a_up, m], [g_up, m])
    d_dn = np.polymul([g_dn + a_dn, m], [g_dn, m])
    price = 2.0 * LN2 * lambda_k * np.polymul(d_up, d_dn)
    revenue = w_u * m * np.polyadd(a_up * d_dn, a_dn * d_up)
    return np.polysub(price, revenue)


def quartic_residual(coeffs, p: float) -> float:
    """|Q(p)| relative to the largest monomial magnitude."""
    coeffs = np.asarray(coeffs, dtype=float)
    powers = p ** np.arange(len(coeffs) - 1, -1, -1)
    terms = coeffs * powers
    scale = np.max(np.abs(terms))
    return float(abs(terms.sum()) / scale) if scale > 0 else 0.0


def refine_tuple_powers(coeffs, weights, relay, budgets, *,
                        root_rtol: float = DEFAULT_ROOT_RTOL,
                        max_bisect_iters: int = DEFAULT_MAX_BISECT,
                        lambda_floor: float = DEFAULT_LAMBDA_FLOOR,
                        max_outer_iters: int = 200):
    """Split each relay budget over its tuples (equal-marginal allocation).

    ``coeffs`` are per-tuple coefficient arrays of length T, ``relay`` maps
    tuples to relays and ``budgets`` has one entry per relay. Returns the
    tuple powers and the per-relay multipliers.
    """
    budgets = np.asarray(budgets, dtype=float)
    relay = np.asarray(relay, dtype=int)
    weights = np.asarray(weights, dtype=float)
    K = budgets.size
    if relay.size == 0:
        return np.zeros(0), np.full(K, lambda_floor)

    cap = budgets[relay]
    tol = root_rtol * cap

    def demand(mu):
        p = solve_power(coeffs, mu[relay], weights, cap, tol,
                        max_bisect_iters=max_bisect_iters, lambda_floor=lambda_floor)
        return p, np.bincount(relay, weights=p, minlength=K)

    lo = np.full(K, lambda_floor)
    p_lo, d_lo = demand(lo)
    binding = d_lo > budgets
    if not binding.any():
        return p_lo, lo

    hi = np.ones(K)
    for _ in range(max_outer_iters):
        _, d_hi = demand(hi)
        grow = binding & (d_hi >= budgets)
        if not grow.any():
            break
        hi[grow] *= 2.0
    else:
        raise BisectionError("could not bracket the relay multiplier")

    for _ in range(max_outer_iters):
        _, d_hi = demand(hi)
        done = ~binding | (hi - lo <= 1e-13 * hi) | (budgets - d_hi <= 1e-10 * budgets)
        if done.all():
            break
        mid = np.where(hi > 4.0 * lo, np.sqrt(lo * hi), 0.5 * (lo + hi))
        _, d_mid = demand(mid)
        over = d_mid > budgets
        lo = np.where(binding & over, mid, lo)
        hi = np.where(binding & ~over, mid, hi)

    mu = np.where(binding, hi, lambda_floor)
    p, _ = demand(mu)
    return p, mu


def refine_powers(allocation, channels, config, cfg: PowerSolverConfig | None = None) -> np.ndarray:
    """Refined relay powers for the tuples of ``allocation``, in its order.

    ``allocation`` needs integer arrays ``ms``, ``rs``, ``mac``, ``bc``.
    ``cfg`` supplies the tolerance ratio, iteration cap and price floor; the
    cap itself is always the owning relay's budget.
    """
    from twrelay.rate_model import tuple_arrays

    arrays = tuple_arrays(channels, config)
    coeffs = arrays.at(allocation.ms, allocation.rs, allocation.mac, allocation.bc)
    weights = np.asarray(config.ms_weights)[allocation.ms]
    kwargs = {}
    if cfg is not None:
        kwargs = dict(root_rtol=cfg.root_tol / cfg.p_cap,
                      max_bisect_iters=cfg.max_bisect_iters,
                      lambda_floor=cfg.lambda_floor)
    p, _ = refine_tuple_powers(coeffs, weights, allocation.rs, config.rs_power_budget, **kwargs)
    return p
