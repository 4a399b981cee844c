"""Equal-power (EPA) and random (RRA) comparison schemes.

Both give every BC subcarrier a fixed share ``P_k / N`` of the serving
relay's budget, so any assignment they produce is feasible.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from twrelay.assignment import Allocation
from twrelay.channel import ChannelRealization, NetworkConfig
from twrelay.dual_solver import SolverReport
from twrelay.rate_model import rate, tuple_arrays

__all__ = ["equal_power_rate_matrix", "epa_solve", "rra_solve"]


def equal_power_rate_matrix(channels: ChannelRealization, config: NetworkConfig):
    """Best weighted rate of each subcarrier pair at equal relay power.

    Returns ``(values, argmax_ms, argmax_rs, power)``, each N x N.
    """
    arrays = tuple_arrays(channels, config)
    M, K, N, _ = arrays.m.shape
    share = np.asarray(config.rs_power_budget, dtype=float) / N
    p = np.broadcast_to(share[None, :, None, None], arrays.m.shape)
    w = np.asarray(config.ms_weights, dtype=float)[:, None, None, None]
    values = (w * rate(p, *arrays.coeffs)).reshape(M * K, N, N)
    best = np.argmax(values, axis=0)
    top = np.take_along_axis(values, best[None], axis=0)[0]
    rs = best % K
    return top, best // K, rs, share[rs]


def epa_solve(channels: ChannelRealization, config: NetworkConfig) -> SolverReport:
    values, ms, rs, power = equal_power_rate_matrix(channels, config)
    rows, cols = linear_sum_assignment(values, maximize=True)
    keep = values[rows, cols] > 0.0
    rows, cols = rows[keep], cols[keep]
    allocation = Allocation(ms=ms[rows, cols], rs=rs[rows, cols], mac=rows, bc=cols,
                            power=power[rows, cols])
    return SolverReport(allocation=allocation, primal_value=float(values[rows, cols].sum()),
                        dual_value=None, gap=None, iterations=1, converged=True)


def rra_solve(channels: ChannelRealization, config: NetworkConfig,
              rng: np.random.Generator) -> SolverReport:
    M, K, N = channels.dims
    mac = np.arange(N)
    bc = rng.permutation(N)
    ms = rng.integers(0, M, size=N)
    rs = rng.integers(0, K, size=N)
    power = np.asarray(config.rs_power_budget, dtype=float)[rs] / N
    allocation = Allocation(ms=ms, rs=rs, mac=mac, bc=bc, power=power)
    objective = allocation.weighted_rate(tuple_arrays(channels, config), config.ms_weights)
    return SolverReport(allocation=allocation, primal_value=objective, dual_value=None,
                        gap=None, iterations=1, converged=True)
