"""Per-pair user/relay selection and the subcarrier pairing step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from twrelay.channel import ChannelRealization, NetworkConfig
from twrelay.power_opt import DEFAULT_LAMBDA_FLOOR, DEFAULT_MAX_BISECT, DEFAULT_ROOT_RTOL, solve_power
from twrelay.rate_model import TupleArrays, rate, tuple_arrays

__all__ = [
    "ProfitMatrix",
    "Allocation",
    "profit_matrix",
    "build_profit_matrix",
    "solve_pairing",
    "pairing_objective",
]


@dataclass(frozen=True)
class ProfitMatrix:
    """Best profit of each (MAC subcarrier i, BC subcarrier j) pair.

    ``argmax_ms``/``argmax_rs`` name the winning tuple and ``power`` its
    relay power. All arrays are N x N.
    """

    values: np.ndarray
    argmax_ms: np.ndarray
    argmax_rs: np.ndarray
    power: np.ndarray

    @classmethod
    def from_values(cls, values) -> "ProfitMatrix":
        """Wrap a bare value matrix (winner indices and powers set to zero)."""
        values = np.asarray(values, dtype=float)
        zeros = np.zeros(values.shape, dtype=int)
        return cls(values=values, argmax_ms=zeros, argmax_rs=zeros, power=np.zeros(values.shape))


@dataclass(frozen=True)
class Allocation:
    """Active tuples as parallel arrays; row t is (ms[t], rs[t], mac[t], bc[t], power[t])."""

    ms: np.ndarray
    rs: np.ndarray
    mac: np.ndarray
    bc: np.ndarray
    power: np.ndarray

    @classmethod
    def empty(cls) -> "Allocation":
        z = np.zeros(0, dtype=int)
        return cls(z, z, z, z, np.zeros(0))

    @classmethod
    def from_tuples(cls, tuples) -> "Allocation":
        tuples = list(tuples)
        if not tuples:
            return cls.empty()
        cols = list(zip(*tuples))
        ints = [np.asarray(c, dtype=int) for c in cols[:4]]
        return cls(*ints, np.asarray(cols[4], dtype=float))

    def __len__(self) -> int:
        return int(self.ms.size)

    @property
    def active_tuples(self) -> list[tuple[int, int, int, int, float]]:
        return [(int(u), int(k), int(i), int(j), float(p))
                for u, k, i, j, p in zip(self.ms, self.rs, self.mac, self.bc, self.power)]

    def with_power(self, power) -> "Allocation":
        return Allocation(self.ms, self.rs, self.mac, self.bc, np.asarray(power, dtype=float))

    def relay_power(self, num_rs: int) -> np.ndarray:
        return np.bincount(self.rs, weights=self.power, minlength=num_rs)

    def tuple_rates(self, arrays: TupleArrays) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(0)
        return rate(self.power, *arrays.at(self.ms, self.rs, self.mac, self.bc))

    def ms_rates(self, arrays: TupleArrays, num_ms: int) -> np.ndarray:
        return np.bincount(self.ms, weights=self.tuple_rates(arrays), minlength=num_ms)

    def weighted_rate(self, arrays: TupleArrays, weights) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.sum(np.asarray(weights)[self.ms] * self.tuple_rates(arrays)))

    def check_feasible(self, budgets, rtol: float = 1e-6) -> None:
        """Raise ValueError unless exclusivity and relay budgets hold."""
        if len(np.unique(self.mac)) != len(self) or len(np.unique(self.bc)) != len(self):
            raise ValueError("a subcarrier is used more than once")
        if np.any(self.power < 0):
            raise ValueError("negative relay power")
        budgets = np.asarray(budgets, dtype=float)
        used = self.relay_power(budgets.size)
        if np.any(used > budgets * (1.0 + rtol)):
            raise ValueError(f"relay budget exceeded: {used} > {budgets}")


def profit_matrix(arrays: TupleArrays, weights, lam, budgets, *,
                  root_rtol: float = DEFAULT_ROOT_RTOL,
                  max_bisect_iters: int = DEFAULT_MAX_BISECT,
                  lambda_floor: float = DEFAULT_LAMBDA_FLOOR) -> ProfitMatrix:
    """Profit matrix from precomputed tuple coefficients."""
    M, K, N, _ = arrays.m.shape
    lam_eff = np.maximum(np.asarray(lam, dtype=float), lambda_floor)[None, :, None, None]
    w = np.asarray(weights, dtype=float)[:, None, None, None]
    cap = np.asarray(budgets, dtype=float)[None, :, None, None]
    p = solve_power(arrays.coeffs, lam_eff, w, cap, root_rtol * cap,
                    max_bisect_iters=max_bisect_iters, lambda_floor=lambda_floor)
    x = w * rate(p, *arrays.coeffs) - lam_eff * p
    # argmax returns the first maximum, i.e. lowest u then lowest k.
    flat = x.reshape(M * K, N, N)
    best = np.argmax(flat, axis=0)
    values = np.take_along_axis(flat, best[None], axis=0)[0]
    power = np.take_along_axis(p.reshape(M * K, N, N), best[None], axis=0)[0]
    return ProfitMatrix(values=values, argmax_ms=best // K, argmax_rs=best % K, power=power)


def build_profit_matrix(channels: ChannelRealization, config: NetworkConfig, lam,
                        cfg=None) -> ProfitMatrix:
    kwargs = {}
    if cfg is not None:
        kwargs = dict(root_rtol=cfg.root_tol / cfg.p_cap,
                      max_bisect_iters=cfg.max_bisect_iters, lambda_floor=cfg.lambda_floor)
    return profit_matrix(tuple_arrays(channels, config), config.ms_weights, lam,
                         config.rs_power_budget, **kwargs)


def solve_pairing(matrix: ProfitMatrix | np.ndarray) -> Allocation:
    """Max-weight pairing where a pair may be left unused.

    Cells are clamped at zero for the assignment, then selected cells with
    nonpositive profit are dropped.
    """
    if not isinstance(matrix, ProfitMatrix):
        matrix = ProfitMatrix.from_values(matrix)
    values = np.asarray(matrix.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("profit matrix has non-finite entries")
    rows, cols = linear_sum_assignment(np.maximum(values, 0.0), maximize=True)
    keep = values[rows, cols] > 0.0
    rows, cols = rows[keep], cols[keep]
    return Allocation(ms=np.asarray(matrix.argmax_ms)[rows, cols].astype(int),
                      rs=np.asarray(matrix.argmax_rs)[rows, cols].astype(int),
                      mac=rows.astype(int), bc=cols.astype(int),
                      power=np.asarray(matrix.power, dtype=float)[rows, cols])


def pairing_objective(matrix: ProfitMatrix | np.ndarray, allocation: Allocation) -> float:
    values = matrix.values if isinstance(matrix, ProfitMatrix) else np.asarray(matrix)
    return float(values[allocation.mac, allocation.bc].sum())
