"""Exhaustive reference solver for tiny instances.

Enumerates every feasible assignment (partial pairings of MAC and BC
subcarriers, each used pair given an (MS, RS) tuple) and grid-searches each
relay's power simplex. Cost grows factorially; keep N <= 3.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from twrelay.assignment import Allocation
from twrelay.channel import ChannelRealization, NetworkConfig
from twrelay.rate_model import rate, tuple_arrays

__all__ = ["simplex_grid", "partial_pairings", "exhaustive_solve"]


@lru_cache(maxsize=None)
def simplex_grid(dim: int, steps: int) -> np.ndarray:
    """Integer points n >= 0 with sum(n) <= steps, shape (count, dim)."""
    if dim == 0:
        return np.zeros((1, 0), dtype=int)
    rows = []
    for first in range(steps + 1):
        rest = simplex_grid(dim - 1, steps - first)
        rows.append(np.column_stack([np.full(len(rest), first), rest]))
    return np.vstack(rows)


def partial_pairings(n: int):
    """Every set of disjoint (i, j) pairs on an n x n grid, empty set included."""
    for size in range(n + 1):
        for rows in itertools.combinations(range(n), size):
            for cols in itertools.permutations(range(n), size):
                yield tuple(zip(rows, cols))


def exhaustive_solve(channels: ChannelRealization, config: NetworkConfig,
                     grid_steps: int = 200):
    """Best objective over all assignments with gridded relay powers.

    Returns ``(objective, allocation)``.
    """
    M, K, N = channels.dims
    if N > 3:
        raise ValueError("exhaustive search is limited to N <= 3")
    arrays = tuple_arrays(channels, config)
    weights = np.asarray(config.ms_weights, dtype=float)
    budgets = np.asarray(config.rs_power_budget, dtype=float)
    choices = [(u, k) for u in range(M) for k in range(K)]
    cache: dict = {}

    def relay_best(k, members):
        # members: sorted tuple of (u, i, j) served by relay k
        key = (k, members)
        if key not in cache:
            if not members:
                cache[key] = (0.0, np.zeros(0))
            else:
                grid = simplex_grid(len(members), grid_steps) * (budgets[k] / grid_steps)
                total = np.zeros(len(grid))
                for col, (u, i, j) in enumerate(members):
                    total += weights[u] * rate(grid[:, col], *arrays.at(u, k, i, j))
                best = int(np.argmax(total))
                cache[key] = (float(total[best]), grid[best])
        return cache[key]

    best_value, best_alloc = 0.0, Allocation.empty()
    for pairing in partial_pairings(N):
        for picks in itertools.product(choices, repeat=len(pairing)):
            per_relay: dict[int, list] = {k: [] for k in range(K)}
            for (i, j), (u, k) in zip(pairing, picks):
                per_relay[k].append((u, i, j))
            value = 0.0
            parts = []
            for k, members in per_relay.items():
                members = tuple(sorted(members))
                v, p = relay_best(k, members)
                value += v
                parts.extend((u, k, i, j, float(pk)) for (u, i, j), pk in zip(members, p))
            if value > best_value:
                best_value, best_alloc = value, Allocation.from_tuples(parts)
    return best_value, best_alloc
