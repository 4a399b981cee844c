"""Network geometry and random channel realizations.

The cell is centred on the BS. Relays sit equally spaced on a ring and the
mobiles are dropped uniformly by area over the annulus between that ring and
the cell edge. Every link carries distance path loss, one log-normal
shadowing draw and i.i.d. Rayleigh fading per subcarrier.

Powers are expressed in units of the receiver noise power, and the path loss
is normalised to one at the cell radius.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "NetworkConfig",
    "NodePositions",
    "ChannelRealization",
    "place_nodes",
    "sample_channels",
    "large_scale_gains",
    "realization",
    "read_kv_file",
    "network_config_from_mapping",
    "load_network_config",
    "db_to_linear",
    "parse_float_list",
    "dump_channels_json",
]

# Guards the path loss against a mobile dropped on top of a relay.
MIN_LINK_DISTANCE = 1.0


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of the network and its power settings.

    ``bs_power_per_subcarrier`` and ``ms_power_per_subcarrier`` are the fixed
    per-subcarrier transmit SNRs of the BS and of every MS.
    ``rs_power_budget`` holds the total power budget of each relay.
    """

    num_ms: int
    num_rs: int
    num_subcarriers: int
    bs_power_per_subcarrier: float
    ms_power_per_subcarrier: float
    rs_power_budget: tuple[float, ...]
    ms_weights: tuple[float, ...]
    cell_radius: float = 2000.0
    rs_ring_radius: float = 1000.0
    path_loss_exponent: float = 4.0
    shadowing_sigma_db: float = 5.8
    reciprocal_fading: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rs_power_budget",
                           tuple(float(p) for p in self.rs_power_budget))
        object.__setattr__(self, "ms_weights",
                           tuple(float(w) for w in self.ms_weights))
        self.validate()

    def validate(self) -> None:
        for name in ("num_ms", "num_rs", "num_subcarriers"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if len(self.rs_power_budget) != self.num_rs:
            raise ValueError("rs_power_budget needs one entry per relay")
        if len(self.ms_weights) != self.num_ms:
            raise ValueError("ms_weights needs one entry per mobile")
        powers = (self.bs_power_per_subcarrier, self.ms_power_per_subcarrier,
                  *self.rs_power_budget)
        if not all(np.isfinite(p) and p > 0 for p in powers):
            raise ValueError("all powers must be positive and finite")
        if not all(np.isfinite(w) and w >= 0 for w in self.ms_weights):
            raise ValueError("ms_weights must be nonnegative")
        if not 0 < self.rs_ring_radius < self.cell_radius:
            raise ValueError("need 0 < rs_ring_radius < cell_radius")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be nonnegative")

    @classmethod
    def from_db(cls, num_ms: int, num_rs: int, num_subcarriers: int,
                bs_power_db: float = 10.0, ms_power_db: float = 10.0,
                rs_power_db: float = 10.0, ms_weights=None, **kwargs) -> "NetworkConfig":
        """Build a config from per-node total powers in dB.

        BS and MS power is split evenly over the subcarriers; each relay
        gets the whole ``rs_power_db`` as its budget.
        """
        if ms_weights is None:
            ms_weights = (1.0,) * num_ms
        return cls(
            num_ms=num_ms,
            num_rs=num_rs,
            num_subcarriers=num_subcarriers,
            bs_power_per_subcarrier=float(db_to_linear(bs_power_db)) / num_subcarriers,
            ms_power_per_subcarrier=float(db_to_linear(ms_power_db)) / num_subcarriers,
            rs_power_budget=(float(db_to_linear(rs_power_db)),) * num_rs,
            ms_weights=tuple(ms_weights),
            **kwargs,
        )

    def with_relay_power_db(self, rs_power_db: float) -> "NetworkConfig":
        return self.replace(rs_power_budget=(float(db_to_linear(rs_power_db)),) * self.num_rs)

    def replace(self, **changes) -> "NetworkConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return NetworkConfig(**values)

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["rs_power_budget"] = list(self.rs_power_budget)
        out["ms_weights"] = list(self.ms_weights)
        return out


@dataclass(frozen=True)
class NodePositions:
    bs: np.ndarray  # (2,)
    rs: np.ndarray  # (K, 2)
    ms: np.ndarray  # (M, 2)


@dataclass(frozen=True)
class ChannelRealization:
    """Complex channel gains of one realization.

    Shapes: ``h_mac`` (K, N), ``f_mac`` (M, K, N), ``h_bc`` (K, N),
    ``f_bc`` (K, M, N).
    """

    h_mac: np.ndarray
    f_mac: np.ndarray
    h_bc: np.ndarray
    f_bc: np.ndarray
    positions: NodePositions | None = None
    seed: int | None = None

    def __post_init__(self):
        K, N = self.h_mac.shape
        M = self.f_mac.shape[0]
        expected = {"h_mac": (K, N), "f_mac": (M, K, N), "h_bc": (K, N), "f_bc": (K, M, N)}
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite gains")

    @property
    def dims(self) -> tuple[int, int, int]:
        """(M, K, N)."""
        return self.f_mac.shape

    def to_json_dict(self) -> dict[str, Any]:
        def cplx(a):
            return np.stack([a.real, a.imag], axis=-1).tolist()

        out: dict[str, Any] = {
            "seed": self.seed,
            "num_ms": self.dims[0],
            "num_rs": self.dims[1],
            "num_subcarriers": self.dims[2],
            "layout": {"h_mac": "[k][i][re,im]", "f_mac": "[u][k][i][re,im]",
                       "h_bc": "[k][j][re,im]", "f_bc": "[k][u][j][re,im]"},
            "h_mac": cplx(self.h_mac),
            "f_mac": cplx(self.f_mac),
            "h_bc": cplx(self.h_bc),
            "f_bc": cplx(self.f_bc),
        }
        if self.positions is not None:
            out["positions"] = {
                "bs": self.positions.bs.tolist(),
                "rs": self.positions.rs.tolist(),
                "ms": self.positions.ms.tolist(),
            }
        return out


def place_nodes(config: NetworkConfig, rng: np.random.Generator) -> NodePositions:
    K, M = config.num_rs, config.num_ms
    angles = 2.0 * np.pi * np.arange(K) / K
    rs = config.rs_ring_radius * np.column_stack([np.cos(angles), np.sin(angles)])
    # Uniform by area: invert the CDF of r**2 on [r_in**2, r_out**2].
    r_in2, r_out2 = config.rs_ring_radius ** 2, config.cell_radius ** 2
    radius = np.sqrt(rng.uniform(r_in2, r_out2, size=M))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=M)
    ms = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    return NodePositions(bs=np.zeros(2), rs=rs, ms=ms)


def _rayleigh(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def large_scale_gain(distance, config: NetworkConfig, shadow_db) -> np.ndarray:
    d = np.maximum(np.asarray(distance, dtype=float), MIN_LINK_DISTANCE)
    path_loss = (d / config.cell_radius) ** (-config.path_loss_exponent)
    return path_loss * db_to_linear(shadow_db)


def large_scale_gains(config: NetworkConfig, positions: NodePositions,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Path loss times shadowing for BS-RS links (K,) and MS-RS links (M, K)."""
    K, M = config.num_rs, config.num_ms
    d_bs = np.linalg.norm(positions.rs - positions.bs, axis=1)
    d_ms = np.linalg.norm(positions.ms[:, None, :] - positions.rs[None, :, :], axis=2)
    sigma = config.shadowing_sigma_db
    beta_bs = large_scale_gain(d_bs, config, sigma * rng.standard_normal(K))
    beta_ms = large_scale_gain(d_ms, config, sigma * rng.standard_normal((M, K)))
    return beta_bs, beta_ms


def sample_channels(config: NetworkConfig, positions: NodePositions,
                    rng: np.random.Generator, seed: int | None = None) -> ChannelRealization:
    M, K, N = config.num_ms, config.num_rs, config.num_subcarriers
    beta_bs, beta_ms = large_scale_gains(config, positions, rng)
    amp_bs = np.sqrt(beta_bs)[:, None]
    amp_ms = np.sqrt(beta_ms)[:, :, None]
    h_mac = amp_bs * _rayleigh(rng, (K, N))
    f_mac = amp_ms * _rayleigh(rng, (M, K, N))
    if config.reciprocal_fading:
        h_bc = h_mac.copy()
        f_bc = np.transpose(f_mac, (1, 0, 2)).copy()
    else:
        h_bc = amp_bs * _rayleigh(rng, (K, N))
        f_bc = np.transpose(amp_ms * _rayleigh(rng, (M, K, N)), (1, 0, 2)).copy()
    return ChannelRealization(h_mac=h_mac, f_mac=f_mac, h_bc=h_bc, f_bc=f_bc,
                              positions=positions, seed=seed)


def realization(config: NetworkConfig, seed: int) -> ChannelRealization:
    """Place nodes and draw channels from a single integer seed."""
    rng = np.random.default_rng(seed)
    positions = place_nodes(config, rng)
    return sample_channels(config, positions, rng, seed=seed)


# -- configuration files ---------------------------------------------------

_SECTION = "config"


def read_kv_file(path) -> dict[str, str]:
    """Read a flat ``key = value`` file (``#`` comments allowed)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string(f"[{_SECTION}]\n" + text)
    return dict(parser[_SECTION])


def parse_float_list(value) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).replace(";", ",").split(",") if v.strip()]


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def network_config_from_mapping(values: dict[str, Any]) -> NetworkConfig:
    """Build a NetworkConfig from flat keys.

    Keys are the NetworkConfig field names. ``bs_power_db``, ``ms_power_db``
    (total node power, split over subcarriers) and ``rs_power_db`` (relay
    budget) may be given instead of the linear fields.
    """
    M = int(values["num_ms"])
    K = int(values["num_rs"])
    N = int(values["num_subcarriers"])

    def linear_or_db(name, db_name, default_db, per_subcarrier):
        if name in values:
            return float(values[name])
        total = float(db_to_linear(float(values.get(db_name, default_db))))
        return total / N if per_subcarrier else total

    p_b = linear_or_db("bs_power_per_subcarrier", "bs_power_db", 10.0, True)
    p_u = linear_or_db("ms_power_per_subcarrier", "ms_power_db", 10.0, True)
    if "rs_power_budget" in values:
        budget = parse_float_list(values["rs_power_budget"])
        if len(budget) == 1:
            budget = budget * K
    else:
        budget = [float(db_to_linear(float(values.get("rs_power_db", 10.0))))] * K
    weights = parse_float_list(values["ms_weights"]) if "ms_weights" in values else [1.0] * M

    optional: dict[str, Any] = {}
    for name in ("cell_radius", "rs_ring_radius", "path_loss_exponent", "shadowing_sigma_db"):
        if name in values:
            optional[name] = float(values[name])
    if "reciprocal_fading" in values:
        optional["reciprocal_fading"] = _parse_bool(values["reciprocal_fading"])
    return NetworkConfig(num_ms=M, num_rs=K, num_subcarriers=N,
                         bs_power_per_subcarrier=p_b, ms_power_per_subcarrier=p_u,
                         rs_power_budget=tuple(budget), ms_weights=tuple(weights),
                         **optional)


def load_network_config(path) -> NetworkConfig:
    return network_config_from_mapping(read_kv_file(path))


def dump_channels_json(channels: ChannelRealization) -> str:
    return json.dumps(channels.to_json_dict(), indent=None, separators=(",", ":"))
