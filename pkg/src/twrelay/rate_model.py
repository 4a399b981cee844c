"""Two-way AF sum-rate of one (MS, RS, MAC subcarrier, BC subcarrier) tuple.

Writing ``m = 1 + p_b|h_mac|^2 + p_u|f_mac|^2``, the rate with relay power
``p`` is

    R(p) = 1/2 log2(1 + a_up p / (g_up p + m)) + 1/2 log2(1 + a_dn p / (g_dn p + m))

with ``a_up = p_u |f_mac|^2 |h_bc|^2``, ``g_up = |h_bc|^2`` for the uplink and
``a_dn = p_b |h_mac|^2 |f_bc|^2``, ``g_dn = |f_bc|^2`` for the downlink.
Each term is ``1/2 log2`` of ``((g + a) p + m) / (g p + m)``, which gives the
closed-form slope used by the power solver.

All array helpers broadcast, so the same code evaluates one tuple or the
whole (M, K, N, N) tuple grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from twrelay.channel import ChannelRealization, NetworkConfig

__all__ = [
    "TupleContext",
    "TupleArrays",
    "tuple_arrays",
    "rate",
    "rate_slope",
    "sum_rate",
    "profit",
]

LN2 = math.log(2.0)


def rate(p, a_up, g_up, a_dn, g_dn, m):
    """Vectorised sum-rate in bits/s/Hz."""
    p = np.asarray(p, dtype=float)
    up = np.log1p(a_up * p / (g_up * p + m))
    dn = np.log1p(a_dn * p / (g_dn * p + m))
    return (0.5 / LN2) * (up + dn)


def rate_slope(p, a_up, g_up, a_dn, g_dn, m):
    """Vectorised dR/dp."""
    p = np.asarray(p, dtype=float)
    d_up = ((g_up + a_up) * p + m) * (g_up * p + m)
    d_dn = ((g_dn + a_dn) * p + m) * (g_dn * p + m)
    return (0.5 / LN2) * m * (a_up / d_up + a_dn / d_dn)


def _check_nonneg(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{name} must be finite and nonnegative, got {value!r}")


@dataclass(frozen=True)
class TupleContext:
    """Channel gains and fixed source powers seen by one tuple (u, k, i, j).

    Gains are squared magnitudes: ``gain_fm`` is MS->RS on subcarrier i,
    ``gain_hm`` BS->RS on i, ``gain_hb`` RS->BS on j, ``gain_fb`` RS->MS on j.
    """

    u: int
    k: int
    i: int
    j: int
    gain_fm: float
    gain_hm: float
    gain_hb: float
    gain_fb: float
    p_b: float
    p_u: float

    def __post_init__(self):
        for name in ("gain_fm", "gain_hm", "gain_hb", "gain_fb", "p_b", "p_u"):
            _check_nonneg(name, getattr(self, name))

    @property
    def m(self) -> float:
        return 1.0 + self.p_b * self.gain_hm + self.p_u * self.gain_fm

    def coefficients(self) -> tuple[float, float, float, float, float]:
        """(a_up, g_up, a_dn, g_dn, m)."""
        return (self.p_u * self.gain_fm * self.gain_hb, self.gain_hb,
                self.p_b * self.gain_hm * self.gain_fb, self.gain_fb, self.m)

    @classmethod
    def from_channels(cls, channels: ChannelRealization, config: NetworkConfig,
                      u: int, k: int, i: int, j: int) -> "TupleContext":
        return cls(u=u, k=k, i=i, j=j,
                   gain_fm=float(abs(channels.f_mac[u, k, i]) ** 2),
                   gain_hm=float(abs(channels.h_mac[k, i]) ** 2),
                   gain_hb=float(abs(channels.h_bc[k, j]) ** 2),
                   gain_fb=float(abs(channels.f_bc[k, u, j]) ** 2),
                   p_b=config.bs_power_per_subcarrier,
                   p_u=config.ms_power_per_subcarrier)


@dataclass(frozen=True)
class TupleArrays:
    """Rate coefficients of every tuple, broadcast to shape (M, K, N, N).

    Axis order is (u, k, i, j).
    """

    a_up: np.ndarray
    g_up: np.ndarray
    a_dn: np.ndarray
    g_dn: np.ndarray
    m: np.ndarray

    @property
    def coeffs(self):
        return self.a_up, self.g_up, self.a_dn, self.g_dn, self.m

    def at(self, u, k, i, j):
        """Coefficients of the tuples selected by index arrays."""
        return tuple(c[u, k, i, j] for c in self.coeffs)


def tuple_arrays(channels: ChannelRealization, config: NetworkConfig) -> TupleArrays:
    M, K, N = channels.dims
    p_b = config.bs_power_per_subcarrier
    p_u = config.ms_power_per_subcarrier
    gfm = (np.abs(channels.f_mac) ** 2)[:, :, :, None]                         # (M,K,N,1)
    ghm = (np.abs(channels.h_mac) ** 2)[None, :, :, None]                      # (1,K,N,1)
    ghb = (np.abs(channels.h_bc) ** 2)[None, :, None, :]                       # (1,K,1,N)
    gfb = (np.abs(np.transpose(channels.f_bc, (1, 0, 2))) ** 2)[:, :, None, :]  # (M,K,1,N)
    shape = (M, K, N, N)
    m = 1.0 + p_b * ghm + p_u * gfm
    return TupleArrays(
        a_up=np.broadcast_to(p_u * gfm * ghb, shape).copy(),
        g_up=np.broadcast_to(ghb, shape).copy(),
        a_dn=np.broadcast_to(p_b * ghm * gfb, shape).copy(),
        g_dn=np.broadcast_to(gfb, shape).copy(),
        m=np.broadcast_to(m, shape).copy(),
    )


def sum_rate(ctx: TupleContext, p_relay: float) -> float:
    _check_nonneg("p_relay", p_relay)
    if p_relay == 0.0:
        return 0.0
    return float(rate(p_relay, *ctx.coefficients()))


def profit(ctx: TupleContext, lambda_k: float, w_u: float, p_star: float) -> float:
    """Weighted rate revenue minus the power cost ``lambda_k * p_star``."""
    _check_nonneg("lambda_k", lambda_k)
    _check_nonneg("w_u", w_u)
    return w_u * sum_rate(ctx, p_star) - lambda_k * p_star
