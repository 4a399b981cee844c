"""Monte Carlo experiment runner and result files."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from twrelay.baselines import epa_solve, rra_solve
from twrelay.channel import (
    ChannelRealization,
    NetworkConfig,
    network_config_from_mapping,
    parse_float_list,
    realization,
)
from twrelay.dual_solver import SolverOptions, solve
from twrelay.rate_model import tuple_arrays

__all__ = [
    "SCHEMES",
    "ExperimentSpec",
    "Record",
    "ExperimentResult",
    "realization_seed",
    "run_experiment",
    "update_weights",
    "run_fairness",
    "emit_results",
    "SUMMARY_COLUMNS",
    "RECORD_COLUMNS",
]

SCHEMES = ("proposed", "epa", "rra", "dual_bound")
FAIRNESS_MODES = ("fixed_weights", "proportional")
SUMMARY_COLUMNS = ("power_db", "scheme", "mean_rate", "stderr", "n")
RECORD_COLUMNS = ("realization", "seed", "power_db", "scheme", "sum_rate", "objective",
                  "gap", "iterations")


@dataclass(frozen=True)
class ExperimentSpec:
    network: NetworkConfig
    schemes: tuple[str, ...] = ("proposed", "epa", "rra", "dual_bound")
    num_realizations: int = 200
    rs_power_sweep_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    master_seed: int = 0
    fairness_mode: str = "fixed_weights"
    output_path: str = "results"
    solver: SolverOptions = field(default_factory=SolverOptions)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "rs_power_sweep_db", tuple(float(p) for p in self.rs_power_sweep_db))
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}; choose from {SCHEMES}")
        if len(set(self.schemes)) != len(self.schemes):
            raise ValueError("duplicate schemes")
        if self.num_realizations < 1:
            raise ValueError("num_realizations must be at least 1")
        if not self.rs_power_sweep_db:
            raise ValueError("rs_power_sweep_db must not be empty")
        if self.fairness_mode not in FAIRNESS_MODES:
            raise ValueError(f"fairness_mode must be one of {FAIRNESS_MODES}")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentSpec":
        kwargs: dict = {"network": network_config_from_mapping(values),
                        "solver": SolverOptions.from_mapping(values)}
        if "schemes" in values:
            kwargs["schemes"] = _split_names(values["schemes"])
        if "num_realizations" in values:
            kwargs["num_realizations"] = int(values["num_realizations"])
        if "rs_power_sweep_db" in values:
            kwargs["rs_power_sweep_db"] = parse_float_list(values["rs_power_sweep_db"])
        if "master_seed" in values:
            kwargs["master_seed"] = int(values["master_seed"])
        if "fairness_mode" in values:
            kwargs["fairness_mode"] = str(values["fairness_mode"])
        if "output_path" in values:
            kwargs["output_path"] = str(values["output_path"])
        if "workers" in values:
            kwargs["workers"] = int(values["workers"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "schemes": list(self.schemes),
            "num_realizations": self.num_realizations,
            "rs_power_sweep_db": list(self.rs_power_sweep_db),
            "master_seed": self.master_seed,
            "fairness_mode": self.fairness_mode,
            "solver": asdict(self.solver),
        }

    @classmethod
    def from_manifest(cls, manifest: dict, output_path: str = "results") -> "ExperimentSpec":
        spec = manifest["spec"]
        return cls(network=NetworkConfig(**spec["network"]),
                   schemes=tuple(spec["schemes"]),
                   num_realizations=int(spec["num_realizations"]),
                   rs_power_sweep_db=tuple(spec["rs_power_sweep_db"]),
                   master_seed=int(spec["master_seed"]),
                   fairness_mode=spec["fairness_mode"],
                   solver=SolverOptions(**spec["solver"]),
                   output_path=output_path)


def _split_names(value) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(s.strip() for s in str(value).split(",") if s.strip())


@dataclass(frozen=True)
class Record:
    realization: int
    seed: int
    power_db: float
    scheme: str
    sum_rate: float
    objective: float
    gap: float | None
    iterations: int
    wall_time: float = 0.0


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list[Record]

    def summary(self) -> list[dict]:
        rows = []
        for power in self.spec.rs_power_sweep_db:
            for scheme in self.spec.schemes:
                rates = np.array([r.sum_rate for r in self.records
                                  if r.power_db == power and r.scheme == scheme])
                n = rates.size
                stderr = float(rates.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
                rows.append({"power_db": power, "scheme": scheme,
                             "mean_rate": float(rates.mean()), "stderr": stderr, "n": n})
        return rows

    def mean_rate(self, scheme: str, power_db: float) -> float:
        for row in self.summary():
            if row["scheme"] == scheme and row["power_db"] == float(power_db):
                return row["mean_rate"]
        raise KeyError((scheme, power_db))


def realization_seed(master_seed: int, index: int) -> int:
    """Child seed of realization ``index``; independent of worker layout."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def update_weights(accumulated_rates) -> np.ndarray:
    """Proportional-fair weights ``1 / T_u``."""
    rates = np.asarray(accumulated_rates, dtype=float)
    if np.any(~np.isfinite(rates)) or np.any(rates <= 0):
        raise ValueError("accumulated rates must be positive and finite")
    return 1.0 / rates


def _run_scheme(scheme, channels, config, solver_opts, rra_rng, proposed_cache):
    if scheme in ("proposed", "dual_bound"):
        if "report" not in proposed_cache:
            start = time.perf_counter()
            proposed_cache["report"] = solve(channels, config, solver_opts)
            proposed_cache["time"] = time.perf_counter() - start
        report = proposed_cache["report"]
        elapsed = proposed_cache["time"]
    elif scheme == "epa":
        start = time.perf_counter()
        report = epa_solve(channels, config)
        elapsed = time.perf_counter() - start
    else:
        start = time.perf_counter()
        report = rra_solve(channels, config, rra_rng)
        elapsed = time.perf_counter() - start
    if scheme == "dual_bound":
        return report.dual_value, report.dual_value, report.gap, report.iterations, elapsed, None
    arrays = tuple_arrays(channels, config)
    report.allocation.check_feasible(config.rs_power_budget)
    ms_rates = report.allocation.ms_rates(arrays, config.num_ms)
    return (float(ms_rates.sum()), report.primal_value, report.gap, report.iterations,
            elapsed, ms_rates)


def _rra_rng(seed: int, power_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, power_index])


def _realization_records(spec: ExperimentSpec, index: int) -> list[Record]:
    seed = realization_seed(spec.master_seed, index)
    try:
        channels = realization(spec.network, seed)
        out = []
        for p_idx, power in enumerate(spec.rs_power_sweep_db):
            config = spec.network.with_relay_power_db(power)
            cache: dict = {}
            for scheme in spec.schemes:
                rate, objective, gap, its, elapsed, _ = _run_scheme(
                    scheme, channels, config, spec.solver, _rra_rng(seed, p_idx), cache)
                out.append(Record(index, seed, power, scheme, rate, objective, gap, its, elapsed))
        return out
    except Exception as exc:
        raise RuntimeError(f"realization {index} failed (seed {seed}): {exc}") from exc


def _proportional_records(spec: ExperimentSpec) -> list[Record]:
    M = spec.network.num_ms
    totals = {(p, s): np.zeros(M) for p in range(len(spec.rs_power_sweep_db))
              for s in spec.schemes if s != "dual_bound"}
    records = []
    for index in range(spec.num_realizations):
        seed = realization_seed(spec.master_seed, index)
        channels = realization(spec.network, seed)
        for p_idx, power in enumerate(spec.rs_power_sweep_db):
            base = spec.network.with_relay_power_db(power)
            # weights are fixed before any scheme of this epoch reports
            configs = {}
            for scheme in spec.schemes:
                owner = "proposed" if scheme == "dual_bound" else scheme
                total = totals.get((p_idx, owner), np.zeros(M))
                weights = update_weights(total) if np.all(total > 0) else np.ones(M)
                configs[scheme] = base.replace(ms_weights=tuple(weights))
            cache: dict = {}
            for scheme in spec.schemes:
                rate, objective, gap, its, elapsed, ms_rates = _run_scheme(
                    scheme, channels, configs[scheme], spec.solver, _rra_rng(seed, p_idx), cache)
                records.append(Record(index, seed, power, scheme, rate, objective, gap, its, elapsed))
                if ms_rates is not None:
                    totals[(p_idx, scheme)] = totals[(p_idx, scheme)] + ms_rates
    return records


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    if spec.fairness_mode == "proportional":
        return ExperimentResult(spec, _proportional_records(spec))
    indices = range(spec.num_realizations)
    if spec.workers == 1:
        chunks = [_realization_records(spec, r) for r in indices]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_realization_records, [spec] * len(indices), indices))
    return ExperimentResult(spec, [rec for chunk in chunks for rec in chunk])


def run_fairness(config: NetworkConfig, epochs: int, seed: int, mode: str = "proportional",
                 channel_fn: Callable[[NetworkConfig, int], ChannelRealization] | None = None,
                 options: SolverOptions | None = None) -> np.ndarray:
    """Accumulated per-MS rate of the proposed scheme over ``epochs`` realizations.

    In ``proportional`` mode weights start at one and switch to ``1/T_u``
    once every MS has been served at least once.
    """
    if mode not in FAIRNESS_MODES:
        raise ValueError(f"mode must be one of {FAIRNESS_MODES}")
    channel_fn = channel_fn or realization
    total = np.zeros(config.num_ms)
    for epoch in range(epochs):
        channels = channel_fn(config, realization_seed(seed, epoch))
        weights = np.ones(config.num_ms)
        if mode == "proportional" and np.all(total > 0):
            weights = update_weights(total)
        current = config.replace(ms_weights=tuple(weights))
        report = solve(channels, current, options)
        total += report.allocation.ms_rates(tuple_arrays(channels, current), config.num_ms)
    return total


# -- output -----------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv_text(columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def summary_csv(result: ExperimentResult) -> str:
    return _csv_text(SUMMARY_COLUMNS, result.summary())


def records_csv(result: ExperimentResult) -> str:
    return _csv_text(RECORD_COLUMNS, (asdict(r) for r in result.records))


def timings_csv(result: ExperimentResult) -> str:
    cols = ("realization", "power_db", "scheme", "wall_time")
    return _csv_text(cols, (asdict(r) for r in result.records))


def manifest_json(result: ExperimentResult) -> str:
    from twrelay import __version__

    manifest = {"version": __version__, "master_seed": result.spec.master_seed,
                "spec": result.spec.to_dict()}
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def emit_results(result: ExperimentResult, path, include_timings: bool = False) -> dict[str, Path]:
    """Write summary.csv, records.csv and manifest.json into directory ``path``.

    All files are staged as temporaries in the target directory and renamed
    into place only once every one of them has been written. Wall-clock
    times vary between runs, so they go to a separate timings.csv and only
    on request.
    """
    out_dir = Path(path)
    contents = {"summary.csv": summary_csv(result), "records.csv": records_csv(result),
                "manifest.json": manifest_json(result)}
    if include_timings:
        contents["timings.csv"] = timings_csv(result)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc

    staged: dict[str, str] = {}
    try:
        for name, text in contents.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged[name] = tmp
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        written = {}
        for name, tmp in staged.items():
            os.replace(tmp, out_dir / name)
            written[name] = out_dir / name
        return written
    except OSError as exc:
        for tmp in staged.values():
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise OSError(f"failed writing results to {out_dir}: {exc}") from exc
