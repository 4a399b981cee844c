"""Dual decomposition over the relay power budgets.

Each relay budget gets a price. For fixed prices the Lagrangian separates
into one scalar power problem per tuple plus an assignment over subcarrier
pairs, which yields the dual value and a subgradient. Prices are updated by
projected subgradient descent. At the end the pairing of the best (lowest)
dual iterate, and the pairing whose budget-scaled powers scored best, get
their powers re-split so every relay meets its budget; the better of the two
is returned.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from twrelay.assignment import Allocation, profit_matrix, solve_pairing
from twrelay.channel import ChannelRealization, NetworkConfig
from twrelay.power_opt import (
    DEFAULT_LAMBDA_FLOOR,
    DEFAULT_MAX_BISECT,
    DEFAULT_ROOT_RTOL,
    PowerSolverConfig,
    refine_tuple_powers,
)
from twrelay.rate_model import TupleArrays, tuple_arrays

__all__ = [
    "SolverOptions",
    "DualState",
    "SolverReport",
    "evaluate_dual",
    "subgradient_step",
    "initial_prices",
    "solve",
    "HISTORY_COLUMNS",
    "history_csv",
]

HISTORY_COLUMNS = ("l", "dual_value", "primal_feasible_value", "gap", "subgradient_norm", "omega")


@dataclass(frozen=True)
class SolverOptions:
    tol_lambda: float = 1e-4
    max_iters: int = 500
    init_mode: str = "scaled"   # or "random"
    init_seed: int = 0
    step_scale: float = 0.1
    root_rtol: float = DEFAULT_ROOT_RTOL
    max_bisect_iters: int = DEFAULT_MAX_BISECT
    lambda_floor: float = DEFAULT_LAMBDA_FLOOR

    def __post_init__(self):
        if self.init_mode not in ("scaled", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.max_iters < 1 or self.tol_lambda < 0 or self.step_scale <= 0:
            raise ValueError("invalid solver options")

    @classmethod
    def from_mapping(cls, values) -> "SolverOptions":
        kinds = {"tol_lambda": float, "max_iters": int, "init_mode": str, "init_seed": int,
                 "step_scale": float, "root_rtol": float, "max_bisect_iters": int,
                 "lambda_floor": float}
        return cls(**{k: cast(values[k]) for k, cast in kinds.items() if k in values})

    def power_kwargs(self) -> dict:
        return dict(root_rtol=self.root_rtol, max_bisect_iters=self.max_bisect_iters,
                    lambda_floor=self.lambda_floor)


@dataclass
class DualState:
    lam: np.ndarray
    omega0: float
    iteration: int = 0
    step_omega: float = float("nan")
    subgradient: np.ndarray | None = None
    dual_value: float = float("nan")
    best_dual: float = float("inf")
    lambda_floor: float = DEFAULT_LAMBDA_FLOOR
    history: list[dict] = field(default_factory=list)


@dataclass
class SolverReport:
    allocation: Allocation
    primal_value: float
    dual_value: float | None
    gap: float | None
    iterations: int
    converged: bool
    lam: np.ndarray | None = None
    history: list[dict] = field(default_factory=list)


def _options_from_cfg(cfg) -> SolverOptions:
    if cfg is None:
        return SolverOptions()
    if isinstance(cfg, SolverOptions):
        return cfg
    if isinstance(cfg, PowerSolverConfig):
        return SolverOptions(root_rtol=cfg.root_tol / cfg.p_cap,
                             max_bisect_iters=cfg.max_bisect_iters,
                             lambda_floor=cfg.lambda_floor)
    raise TypeError(f"unsupported solver configuration {type(cfg).__name__}")


def _evaluate(arrays: TupleArrays, weights, budgets, lam, opts: SolverOptions):
    budgets = np.asarray(budgets, dtype=float)
    matrix = profit_matrix(arrays, weights, lam, budgets, **opts.power_kwargs())
    candidate = solve_pairing(matrix)
    lam_eff = np.maximum(lam, opts.lambda_floor)
    dual_value = float(matrix.values[candidate.mac, candidate.bc].sum() + lam_eff @ budgets)
    subgradient = budgets - candidate.relay_power(budgets.size)
    return dual_value, candidate, subgradient


def evaluate_dual(lam, channels: ChannelRealization, config: NetworkConfig, cfg=None):
    """Dual function value, the maximising allocation and a subgradient.

    The subgradient is ``P_k`` minus the power the candidate places on relay
    ``k``; it is a subgradient of the (convex) dual function at ``lam``.
    """
    opts = _options_from_cfg(cfg)
    lam = np.maximum(np.asarray(lam, dtype=float), opts.lambda_floor)
    return _evaluate(tuple_arrays(channels, config), config.ms_weights,
                     config.rs_power_budget, lam, opts)


def subgradient_step(state: DualState) -> DualState:
    """One projected descent step, ``lam <- max(lam - omega_l * subgradient, floor)``
    with ``omega_l = omega0 / sqrt(l + 1)``.

    Moving against the subgradient lowers the dual function: a relay that
    overspends its budget (negative subgradient) gets a higher price.
    """
    if state.subgradient is None:
        raise ValueError("state carries no subgradient")
    omega = state.omega0 / math.sqrt(state.iteration + 1)
    lam = np.maximum(state.lam - omega * state.subgradient, state.lambda_floor)
    return replace(state, lam=lam, iteration=state.iteration + 1, step_omega=omega,
                   subgradient=None, history=state.history)


def initial_prices(config: NetworkConfig, opts: SolverOptions) -> np.ndarray:
    budgets = np.asarray(config.rs_power_budget, dtype=float)
    scale = sum(config.ms_weights) * config.num_rs / (config.num_ms * budgets)
    if opts.init_mode == "random":
        rng = np.random.default_rng(opts.init_seed)
        scale = scale * rng.uniform(0.0, 2.0, size=budgets.size)
    return np.maximum(scale, opts.lambda_floor)


def _scaled_feasible_value(candidate: Allocation, arrays, weights, budgets) -> float:
    """Objective after shrinking overspent relays onto their budgets."""
    if len(candidate) == 0:
        return 0.0
    used = candidate.relay_power(len(budgets))
    shrink = np.minimum(1.0, np.divide(budgets, used, out=np.ones_like(used), where=used > 0))
    return candidate.with_power(candidate.power * shrink[candidate.rs]).weighted_rate(arrays, weights)


def _refine(candidate: Allocation, arrays, weights, budgets, opts: SolverOptions):
    power, _ = refine_tuple_powers(
        arrays.at(candidate.ms, candidate.rs, candidate.mac, candidate.bc),
        weights[candidate.ms], candidate.rs, budgets, **opts.power_kwargs())
    allocation = candidate.with_power(power)
    return allocation, allocation.weighted_rate(arrays, weights)


def solve(channels: ChannelRealization, config: NetworkConfig,
          options: SolverOptions | None = None) -> SolverReport:
    opts = options or SolverOptions()
    arrays = tuple_arrays(channels, config)
    weights = np.asarray(config.ms_weights, dtype=float)
    budgets = np.asarray(config.rs_power_budget, dtype=float)

    lam0 = initial_prices(config, opts)
    state = DualState(lam=lam0, omega0=opts.step_scale * float(lam0.max()),
                      lambda_floor=opts.lambda_floor)
    best_candidate = Allocation.empty()
    best_lam = lam0
    best_primal = 0.0
    primal_candidate = Allocation.empty()
    converged = False
    evaluations = 0

    for _ in range(opts.max_iters):
        dual_value, candidate, subgradient = _evaluate(arrays, weights, budgets, state.lam, opts)
        evaluations += 1
        if dual_value < state.best_dual:
            state.best_dual = dual_value
            best_candidate, best_lam = candidate, state.lam
        feasible = _scaled_feasible_value(candidate, arrays, weights, budgets)
        if feasible > best_primal:
            best_primal, primal_candidate = feasible, candidate
        state.dual_value = dual_value
        state.subgradient = subgradient

        previous = state.lam
        state = subgradient_step(state)
        state.history.append({
            "l": state.iteration - 1,
            "dual_value": dual_value,
            "primal_feasible_value": best_primal,
            "gap": (state.best_dual - best_primal) / state.best_dual if state.best_dual > 0 else 0.0,
            "subgradient_norm": float(np.linalg.norm(subgradient)),
            "omega": state.step_omega,
        })
        if np.linalg.norm(state.lam - previous) <= opts.tol_lambda * np.linalg.norm(previous):
            converged = True
            break

    allocation, primal = _refine(best_candidate, arrays, weights, budgets, opts)
    if primal_candidate is not best_candidate:
        other, other_value = _refine(primal_candidate, arrays, weights, budgets, opts)
        if other_value > primal:
            allocation, primal = other, other_value
    dual = state.best_dual
    if primal > dual + 1e-9 * abs(dual):
        raise RuntimeError(f"weak duality violated: primal {primal!r} > dual {dual!r}")
    gap = (dual - primal) / dual if dual > 0 else 0.0
    return SolverReport(allocation=allocation, primal_value=primal, dual_value=dual, gap=gap,
                        iterations=evaluations, converged=converged, lam=best_lam,
                        history=state.history)


def history_csv(report: SolverReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=HISTORY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in report.history:
        writer.writerow({k: (repr(float(v)) if k != "l" else int(v)) for k, v in row.items()})
    return buf.getvalue()
