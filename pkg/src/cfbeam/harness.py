"""Episode simulation, Monte Carlo aggregation and CSV tables."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .baselines import ExhaustiveSweep, SweepAroundCurrent
from .codebook import CodebookConfig
from .ekf import EkfTracker
from .fingerprint import FingerprintDatabase, GridMap, default_street_database, load
from .mobility import (BlockageModel, MobilityModel, build_transition_kernel,
                       realize_channel, step_true_location)
from .rbe import PRUNE_BELOW, LocationPmf, RbeTracker

logger = logging.getLogger(__name__)

SCHEMES = ("rbe", "ekf", "exhaustive", "sweep_around")
AXES = ("sigma_v", "budget", "velocity", "alpha")
CSV_HEADER = ["scheme", "axis_name", "axis_value", "mean_gap_db", "stderr_gap_db",
              "coverage_ratio", "runs", "frames", "seed_base"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    length_m: float = 100.0
    width_m: float = 4.0
    resolution: float = 0.1
    frame_interval: float = 0.02
    velocity_mps: float = 15.0  # along the street
    sigma_w: float = 1.0
    sigma_v: float = 6.0
    alpha: float = 0.8
    budget: int = 5
    num_frames: int = 100
    num_runs: int = 1000
    initial_cell: tuple[int, int] = (1, 20)
    scheme: str = "rbe"
    seed_base: int = 0
    fingerprint_path: Optional[str] = None
    num_tx_beams: int = 64
    shared_fading: bool = False
    exhaustive_mode: str = "burst"
    initial_belief: str = "point"  # or "uniform"
    ekf_initial_variance: Optional[float] = None  # None -> sigma_w**2
    prune_below: float = PRUNE_BELOW
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("length_m", "width_m", "resolution", "frame_interval"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("budget", "num_frames", "num_runs", "num_tx_beams", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.sigma_w < 0 or self.sigma_v < 0:
            raise ConfigError("noise scales must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.exhaustive_mode not in ("burst", "rotate"):
            raise ConfigError(f"unknown exhaustive_mode {self.exhaustive_mode!r}")
        if self.initial_belief not in ("point", "uniform"):
            raise ConfigError(f"unknown initial_belief {self.initial_belief!r}")
        if self.budget > self.num_tx_beams:
            raise ConfigError("budget exceeds codebook size")
        if not self.grid.contains(self.initial_cell):
            raise ConfigError(f"initial cell {self.initial_cell} outside the grid")
        self.velocity_cells  # integrality check

    @property
    def grid(self) -> GridMap:
        return GridMap.from_meters(self.length_m, self.width_m, self.resolution)

    @property
    def velocity_cells(self) -> tuple[int, int]:
        """Per-frame displacement in cells; must be an integer."""
        cells = self.velocity_mps * self.frame_interval / self.resolution
        if abs(cells - round(cells)) > 1e-9:
            raise ConfigError(f"v*dt = {cells:g} cells per frame is not an integer")
        return (int(round(cells)), 0)

    def mobility(self) -> MobilityModel:
        return MobilityModel(self.velocity_cells, self.frame_interval, self.sigma_w)

    def blockage(self) -> BlockageModel:
        return BlockageModel(self.alpha, self.sigma_v, shared_fading=self.shared_fading)

    def codebook(self) -> CodebookConfig:
        return CodebookConfig(num_tx_beams=self.num_tx_beams)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class EpisodeRecord:
    true_cells: np.ndarray  # (N, 2)
    chosen: np.ndarray  # (N,)
    best: np.ndarray  # (N,)
    achieved_gain: np.ndarray  # gamma of the chosen beam, dB
    max_gain: np.ndarray  # max_i gamma_i, dB
    training: list[list[int]]
    estimates: np.ndarray  # (N, 2), nan for schemes without a location

    @property
    def num_frames(self) -> int:
        return len(self.chosen)


@dataclass
class MetricsRecord:
    scheme: str
    mean_gap_db: float
    stderr_gap_db: float
    coverage_ratio: float
    coverage_stderr: float
    gap_series: np.ndarray  # per-frame mean over runs
    runs: int
    frames: int
    per_run_gap: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    per_run_coverage: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def load_database(config: SimConfig) -> FingerprintDatabase:
    """Fingerprint file named by the config, else the synthetic street."""
    if config.fingerprint_path:
        db = load(config.fingerprint_path, codebook=config.codebook())
        if db.grid.shape != config.grid.shape:
            raise ConfigError(f"fingerprint grid {db.grid.shape} does not match "
                              f"config grid {config.grid.shape}")
        return db
    return _street_database(config.grid, config.codebook())


_STREET_CACHE: dict = {}


def _street_database(grid: GridMap, codebook: CodebookConfig) -> FingerprintDatabase:
    key = (grid, codebook)
    if key not in _STREET_CACHE:
        _STREET_CACHE[key] = default_street_database(grid, codebook)
    return _STREET_CACHE[key]


def make_scheme(config: SimConfig, db: FingerprintDatabase, scheme: Optional[str] = None):
    scheme = scheme or config.scheme
    cell = tuple(config.initial_cell)
    m = db.num_beams
    if scheme == "rbe":
        if config.initial_belief == "point":
            initial = LocationPmf.point_mass(db.grid, cell)
        else:
            initial = LocationPmf.uniform(db.grid)
        return RbeTracker(db, build_transition_kernel(config.mobility()), config.velocity_cells,
                          config.blockage(), config.budget, initial, config.prune_below)
    if scheme == "ekf":
        var = config.sigma_w**2 if config.ekf_initial_variance is None else config.ekf_initial_variance
        return EkfTracker(db, config.velocity_cells, config.sigma_w, config.alpha, config.sigma_v,
                          config.budget, np.array(cell, dtype=float), var * np.eye(2))
    # Baselines start on the strongest fingerprint beam of the known initial cell.
    initial_beam = int(np.argmax(db.gains_at(cell)))
    if scheme == "exhaustive":
        return ExhaustiveSweep(m, config.budget, initial_beam, config.exhaustive_mode)
    if scheme == "sweep_around":
        return SweepAroundCurrent(m, config.budget, initial_beam)
    raise ConfigError(f"unknown scheme {scheme!r}")


def run_episode(config: SimConfig, db: FingerprintDatabase, scheme: Optional[str] = None,
                rng: Optional[np.random.Generator] = None) -> EpisodeRecord:
    """Simulate ``num_frames`` frames after the user leaves the initial cell.

    Per frame: move the user, let the scheme predict and pick its training
    set, realize the channel, hand over the trained gains, log the choice.
    """
    if db.grid.shape != config.grid.shape:
        raise ConfigError(f"database grid {db.grid.shape} does not match config {config.grid.shape}")
    if db.num_beams != config.num_tx_beams:
        raise ConfigError(f"database has {db.num_beams} beams, config {config.num_tx_beams}")
    rng = np.random.default_rng(config.seed_base) if rng is None else rng
    tracker = make_scheme(config, db, scheme)
    model = config.mobility()
    kernel = build_transition_kernel(model)
    blockage = config.blockage()

    n = config.num_frames
    cells = np.zeros((n, 2), dtype=int)
    chosen = np.zeros(n, dtype=int)
    best = np.zeros(n, dtype=int)
    achieved = np.zeros(n)
    maxima = np.zeros(n)
    estimates = np.full((n, 2), np.nan)
    training_log: list[list[int]] = []

    cell = tuple(config.initial_cell)
    for k in range(n):
        cell = step_true_location(cell, model, kernel, rng, db.grid)
        training = tracker.begin_frame()
        channel = realize_channel(db, cell, blockage, rng, frame=k + 1)
        results = [(b, float(channel.gains_db[b])) for b in training]
        beam = tracker.end_frame(results)

        cells[k] = cell
        chosen[k] = beam
        best[k] = channel.best_beam()
        achieved[k] = channel.gains_db[beam]
        maxima[k] = channel.gains_db[best[k]]
        training_log.append(list(training))
        if hasattr(tracker, "location_estimate"):
            estimates[k] = tracker.location_estimate
    return EpisodeRecord(cells, chosen, best, achieved, maxima, training_log, estimates)


def gain_gap(record: EpisodeRecord) -> tuple[np.ndarray, float]:
    """Per-frame gap between the best and the chosen realized gain, and its mean."""
    if record.num_frames == 0:
        raise ValueError("empty episode record")
    series = record.max_gain - record.achieved_gain
    return series, float(series.mean())


def coverage_ratio(record: EpisodeRecord) -> float:
    """Fraction of frames whose best realized beam was in the training set."""
    if record.num_frames == 0:
        raise ValueError("empty episode record")
    hits = sum(int(b) in set(t) for b, t in zip(record.best, record.training))
    return hits / record.num_frames


_WORKER_DB: Optional[FingerprintDatabase] = None


def _init_worker(db: FingerprintDatabase) -> None:
    global _WORKER_DB
    _WORKER_DB = db


def _run_one(args) -> tuple[np.ndarray, float]:
    config, scheme, seed = args
    record = run_episode(config, _WORKER_DB, scheme, np.random.default_rng(seed))
    series, _ = gain_gap(record)
    return series, coverage_ratio(record)


def monte_carlo(config: SimConfig, db: FingerprintDatabase, scheme: Optional[str] = None,
                workers: Optional[int] = None) -> MetricsRecord:
    """Average gap and coverage over runs seeded ``seed_base + run``.

    Runs may execute in worker processes; aggregation is always in run order.
    """
    scheme = scheme or config.scheme
    workers = config.workers if workers is None else workers
    jobs = [(config, scheme, config.seed_base + r) for r in range(config.num_runs)]
    if workers <= 1:
        _init_worker(db)
        outcomes = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(db,)) as pool:
            outcomes = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    series = np.stack([s for s, _ in outcomes])
    run_gap = series.mean(axis=1)
    run_cov = np.array([c for _, c in outcomes])
    runs = len(outcomes)
    spread = (lambda x: float(x.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0)
    return MetricsRecord(scheme, float(run_gap.mean()), spread(run_gap), float(run_cov.mean()),
                         spread(run_cov), series.mean(axis=0), runs, config.num_frames,
                         run_gap, run_cov)


def _axis_change(axis: str, value) -> dict:
    if axis == "sigma_v":
        return {"sigma_v": float(value)}
    if axis == "budget":
        return {"budget": int(value)}
    if axis == "velocity":
        return {"velocity_mps": float(value)}
    if axis == "alpha":
        return {"alpha": float(value)}
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def sweep_experiment(template: SimConfig, axis: str, values: Sequence,
                     schemes: Iterable[str] = ("rbe",), db: Optional[FingerprintDatabase] = None,
                     workers: Optional[int] = None) -> list[dict]:
    """One metrics row per (value, scheme), values outer, schemes inner."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    schemes = list(schemes)
    db = load_database(template) if db is None else db
    rows = []
    for value in values:
        config = template.replace(**_axis_change(axis, value))
        for scheme in schemes:
            m = monte_carlo(config, db, scheme, workers)
            rows.append({"scheme": scheme, "axis_name": axis, "axis_value": value,
                         "mean_gap_db": m.mean_gap_db, "stderr_gap_db": m.stderr_gap_db,
                         "coverage_ratio": m.coverage_ratio, "runs": m.runs,
                         "frames": m.frames, "seed_base": config.seed_base,
                         "metrics": m})
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Iterable[dict], stream=None) -> str:
    """Emit rows with the fixed header; returns the text (and writes it if given a stream)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in CSV_HEADER])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def metrics_row(m: MetricsRecord, config: SimConfig, axis_name: str = "none",
                axis_value="") -> dict:
    return {"scheme": m.scheme, "axis_name": axis_name, "axis_value": axis_value,
            "mean_gap_db": m.mean_gap_db, "stderr_gap_db": m.stderr_gap_db,
            "coverage_ratio": m.coverage_ratio, "runs": m.runs, "frames": m.frames,
            "seed_base": config.seed_base, "metrics": m}


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(SimConfig)}[name]
    raw = raw.strip()
    try:
        if name == "initial_cell":
            a, b = raw.replace("(", "").replace(")", "").split(",")
            return (int(a), int(b))
        if "Optional" in str(ftype):
            if raw.lower() in ("", "none"):
                return None
            return float(raw) if "float" in str(ftype) else raw
        if ftype in ("bool", bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if ftype in ("int", int):
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in dataclasses.fields(SimConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def config_from_sources(path: Optional[str] = None, overrides: Optional[dict] = None) -> SimConfig:
    """File values first, then explicit overrides (e.g. command-line flags)."""
    values = {}
    if path:
        try:
            with open(path) as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return SimConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
