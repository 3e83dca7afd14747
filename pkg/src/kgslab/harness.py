"""Run configuration, orchestration and persistence for the command line."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from . import __version__
from .analyticity_tracker import (
    DEFAULT_FLOOR,
    InsufficientDataError,
    charge,
    decay_exponent,
    estimate_radius,
    fit_decay_exponent,
)
from .evolution import DivergenceError, evolve
from .gevrey_spaces import GevreyParams, gevrey_norm
from .kgs_model import InitialDataSpec, KgsState, initial_state
from .spectral_core import TorusGrid

__all__ = [
    "CONSISTENCY_NOTE",
    "ConfigError",
    "RunConfig",
    "RunRecord",
    "load_config",
    "simulate",
    "write_run",
    "series_columns",
    "format_float",
    "read_series",
    "sigma_label",
]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def format_float(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def sigma_label(sigma: float) -> str:
    return repr(float(sigma))


@dataclass
class RunConfig:
    """Everything a ``simulate`` run depends on. Defaults give the 1-d production run."""

    dim: int = 1
    n: int = 512
    length: float = 8.0
    dt: float = 2e-3
    T: float = 50.0
    output_every: float = 1.0
    output_times: list[float] | None = None
    initial: InitialDataSpec = field(default_factory=InitialDataSpec)
    monitor_sigmas: list[float] = field(default_factory=lambda: [0.05, 0.025, 0.0125])
    band: list[int] | None = None
    floor: float = DEFAULT_FLOOR
    fit_t_min: float = 1.0
    scheme: str = "strang"
    seed: int | None = None
    out: str = "."

    def __post_init__(self) -> None:
        if isinstance(self.initial, dict):
            try:
                self.initial = InitialDataSpec(**self.initial)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"initial: {exc}") from exc
        if self.seed is not None:
            self.initial = InitialDataSpec(**{**asdict(self.initial), "seed": int(self.seed)})
        self.validate()

    def validate(self) -> None:
        try:
            TorusGrid(self.dim, self.n, self.length)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("dt", "T", "output_every", "floor"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if self.scheme != "strang":
            raise ConfigError(f"unknown scheme {self.scheme!r}; only 'strang' is available")
        if not self.monitor_sigmas or any(not (s >= 0 and math.isfinite(s)) for s in self.monitor_sigmas):
            raise ConfigError("monitor_sigmas must be a nonempty list of nonnegative numbers")
        if len({sigma_label(s) for s in self.monitor_sigmas}) != len(self.monitor_sigmas):
            raise ConfigError("monitor_sigmas must be distinct")
        if self.band is not None and (len(self.band) != 2 or not 0 <= self.band[0] < self.band[1]):
            raise ConfigError(f"band must be [lo, hi] with 0 <= lo < hi, got {self.band}")
        try:
            self.times()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def times(self) -> list[float]:
        if self.output_times is not None:
            ts = sorted(set(float(t) for t in self.output_times) | {0.0})
        else:
            count = round(self.T / self.output_every)
            if abs(count * self.output_every - self.T) > 1e-9 * self.T:
                raise ValueError(f"T = {self.T} is not a multiple of output_every = {self.output_every}")
            ts = [i * self.output_every for i in range(count + 1)]
        if ts[-1] > self.T * (1 + 1e-12) or ts[0] < 0:
            raise ValueError(f"output times must lie in [0, T = {self.T}]")
        for t in ts:
            steps = round(t / self.dt)
            if abs(steps * self.dt - t) > 1e-9 * max(1.0, t):
                raise ValueError(f"output time {t} is not a multiple of dt = {self.dt}")
        return ts

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial"] = asdict(self.initial)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | os.PathLike) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def series_columns(sigmas: list[float]) -> list[str]:
    cols = ["t", "sigma_u", "sigma_nplus", "sigma_nminus", "charge"]
    cols += [f"M_{sigma_label(s)}" for s in sigmas]
    cols += [f"N_{sigma_label(s)}" for s in sigmas]
    return cols + ["residual_u"]


@dataclass
class RunRecord:
    config: dict
    rows: list[dict]
    p_hat: float | None
    p_bound: float
    p_reference: dict
    version: str = __version__
    status: str = "ok"
    failure: dict | None = None
    fit_note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> RunRecord:
        return cls(**data)


def _radius(field_, band, floor) -> tuple[float, float]:
    try:
        est = estimate_radius(field_, band=None if band is None else tuple(band), floor=floor)
    except InsufficientDataError:
        return 0.0, 0.0
    return est.sigma_hat, est.residual


def snapshot_row(state: KgsState, cfg: RunConfig) -> dict:
    su, ru = _radius(state.u, cfg.band, cfg.floor)
    sp, _ = _radius(state.n_plus, cfg.band, cfg.floor)
    sm, _ = _radius(state.n_minus, cfg.band, cfg.floor)
    row: dict[str, Any] = {
        "t": float(state.t),
        "sigma_u": su,
        "sigma_nplus": sp,
        "sigma_nminus": sm,
        "charge": charge(state),
    }
    for s in cfg.monitor_sigmas:
        row[f"M_{sigma_label(s)}"] = gevrey_norm(state.u, GevreyParams(s, 0.0)) ** 2
    for s in cfg.monitor_sigmas:
        p = GevreyParams(s, 1.0)
        row[f"N_{sigma_label(s)}"] = gevrey_norm(state.n_plus, p) + gevrey_norm(state.n_minus, p)
    row["residual_u"] = ru
    return row


CONSISTENCY_NOTE = (
    "sigma_hat is one estimator of the radius, not the admissible schedule of the lower bound; "
    "p_hat <= p_bound + 0.5 is a one-sided consistency check, not an identity"
)


def _fit(rows: list[dict], t_min: float) -> tuple[float | None, str]:
    pts = [(r["t"], r["sigma_u"]) for r in rows if r["t"] > t_min and r["sigma_u"] > 0]
    if len(pts) < 4:
        return None, f"only {len(pts)} rows with t > {t_min} and sigma_u > 0; no fit"
    ts, ss = zip(*pts)
    return fit_decay_exponent(ts, ss), f"fit over {len(pts)} rows with t > {t_min}; {CONSISTENCY_NOTE}"


def simulate(cfg: RunConfig) -> tuple[RunRecord, float]:
    """Run evolve with per-snapshot diagnostics. Returns (record, wall-clock seconds).

    On divergence the record carries ``status = "diverged"`` and the rows
    collected before the failure.
    """
    grid = TorusGrid(cfg.dim, cfg.n, cfg.length)
    try:
        state0 = initial_state(cfg.initial, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows: list[dict] = []
    start = time.perf_counter()
    status, failure = "ok", None
    try:
        evolve(state0, cfg.T, cfg.dt, cfg.times(), on_snapshot=lambda t, s: rows.append(snapshot_row(s, cfg)))
    except DivergenceError as exc:
        status = "diverged"
        failure = {"step": exc.step, "t": exc.t, "message": str(exc)}
    wall = time.perf_counter() - start
    p_hat, note = _fit(rows, cfg.fit_t_min)
    record = RunRecord(
        config=cfg.to_dict(),
        rows=rows,
        p_hat=p_hat,
        p_bound=decay_exponent(cfg.dim),
        p_reference={str(d): decay_exponent(d) for d in (1, 2, 3)},
        status=status,
        failure=failure,
        fit_note=note,
    )
    return record, wall


def write_csv(path: Path, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def write_json(path: Path, data: Any) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_run(record: RunRecord, out: str | os.PathLike, wall: float | None = None) -> Path:
    """run.json, series.csv and (wall-clock only) timing.json in ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "run.json", record.to_dict())
    cols = series_columns(record.config["monitor_sigmas"])
    write_csv(out / "series.csv", cols, [[r[c] for c in cols] for r in record.rows])
    if wall is not None:
        write_json(out / "timing.json", {"wall_clock_seconds": wall})
    return out


def read_series(path: str | os.PathLike) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
