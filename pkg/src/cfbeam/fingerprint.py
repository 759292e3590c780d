"""Channel fingerprint database: long-term per-beam gain (dB) of every grid cell.

Gains are stored as float32 in an ``(X, M)`` array, cell-major, where the
flat cell index is ``x1 * width_cells + x2``. A synthetic geometric generator
stands in for ray-traced data.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .codebook import CodebookConfig, steering_gain_matrix

logger = logging.getLogger(__name__)

MAGIC = b"CFPD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIfI")


class FingerprintFormatError(Exception):
    """Unreadable fingerprint file."""


class VersionMismatchError(FingerprintFormatError):
    pass


class DimensionMismatchError(FingerprintFormatError):
    pass


class TruncatedFileError(FingerprintFormatError):
    pass


class Cell(NamedTuple):
    x1: int
    x2: int


@dataclass(frozen=True)
class GridMap:
    length_cells: int
    width_cells: int
    resolution: float = 0.1  # metres per cell

    def __post_init__(self):
        if self.length_cells < 1 or self.width_cells < 1:
            raise ValueError("grid dimensions must be positive")
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")

    @classmethod
    def from_meters(cls, length_m: float, width_m: float, resolution: float = 0.1) -> "GridMap":
        return cls(int(round(length_m / resolution)), int(round(width_m / resolution)), resolution)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.length_cells, self.width_cells)

    @property
    def num_cells(self) -> int:
        return self.length_cells * self.width_cells

    def contains(self, cell) -> bool:
        return 0 <= cell[0] < self.length_cells and 0 <= cell[1] < self.width_cells

    def check(self, cell) -> None:
        if not self.contains(cell):
            raise IndexError(f"cell {tuple(cell)} outside {self.shape} grid")

    def flat_index(self, cell) -> int:
        self.check(cell)
        return int(cell[0]) * self.width_cells + int(cell[1])

    def clamp(self, cell) -> Cell:
        return Cell(min(max(int(cell[0]), 0), self.length_cells - 1),
                    min(max(int(cell[1]), 0), self.width_cells - 1))

    def nearest_cell(self, location) -> Cell:
        """Round a real-valued location (cells) half-up and clamp it into the grid."""
        return self.clamp((np.floor(location[0] + 0.5), np.floor(location[1] + 0.5)))

    def cell_centers(self) -> np.ndarray:
        """Metric centre of every cell, shape (X, 2), flat-index order."""
        i1, i2 = np.meshgrid(np.arange(self.length_cells), np.arange(self.width_cells),
                             indexing="ij")
        return (np.stack([i1.ravel(), i2.ravel()], axis=1) + 0.5) * self.resolution


@dataclass(frozen=True)
class Scatterer:
    position: tuple[float, float]  # metres
    reflection_loss_db: float


@dataclass(frozen=True)
class SceneConfig:
    bs_position: tuple[float, float] = (20.0, -15.0)
    scatterers: tuple[Scatterer, ...] = ()
    path_loss_exponent: float = 2.0
    reference_gain_db: float = 60.0  # path gain at 1 m
    # None -> 40 dB below the strongest stored gain.
    shadow_floor_db: Optional[float] = None

    @property
    def num_paths(self) -> int:
        return 1 + len(self.scatterers)


@dataclass(frozen=True)
class FingerprintDatabase:
    grid: GridMap
    gains_db: np.ndarray  # float32, shape (X, M)
    codebook: CodebookConfig
    shadow_floor_db: Optional[float] = None

    def __post_init__(self):
        gains = np.ascontiguousarray(self.gains_db, dtype=np.float32)
        if gains.shape != (self.grid.num_cells, self.codebook.size):
            raise DimensionMismatchError(
                f"gains shape {gains.shape} does not match grid {self.grid.num_cells} "
                f"x codebook {self.codebook.size}")
        if not np.all(np.isfinite(gains)):
            raise ValueError("fingerprint gains must be finite")
        gains.flags.writeable = False
        object.__setattr__(self, "gains_db", gains)

    @property
    def num_beams(self) -> int:
        return self.codebook.size

    @cached_property
    def gain_field(self) -> np.ndarray:
        """float64 view of the gains, shape (length_cells, width_cells, M)."""
        return self.gains_db.astype(np.float64).reshape(
            self.grid.length_cells, self.grid.width_cells, self.num_beams)

    @cached_property
    def gradients(self) -> np.ndarray:
        """Per-axis finite differences, shape (length_cells, width_cells, M, 2)."""
        g = self.gain_field
        return np.stack([_axis_difference(g, 0), _axis_difference(g, 1)], axis=-1)

    def gains_at(self, cell) -> np.ndarray:
        """All M gains (float64) of one cell."""
        self.grid.check(cell)
        return self.gain_field[int(cell[0]), int(cell[1])]


def _axis_difference(g: np.ndarray, axis: int) -> np.ndarray:
    n = g.shape[axis]
    if n < 2:
        return np.zeros_like(g)
    return np.gradient(g, axis=axis, edge_order=1)


def gain_at(db: FingerprintDatabase, beam: int, cell) -> float:
    db.codebook.check_beam(beam)
    return float(db.gains_db[db.grid.flat_index(cell), beam])


def gradient_at(db: FingerprintDatabase, beam: int, cell) -> np.ndarray:
    """Gradient of the beam's gain field at ``cell`` in dB per cell.

    Central difference in the interior, one-sided at the grid edges.
    """
    db.grid.check(cell)
    db.codebook.check_beam(beam)
    return db.gradients[int(cell[0]), int(cell[1]), beam].copy()


def _segment_hits_box(p0: np.ndarray, p1: np.ndarray, box) -> np.ndarray:
    """Slab test: does each segment p0[k] -> p1[k] cross the axis-aligned box?"""
    (xmin, ymin), (xmax, ymax) = box
    p0 = np.broadcast_to(p0, p1.shape)
    d = p1 - p0
    t0 = np.zeros(len(p1))
    t1 = np.ones(len(p1))
    hit = np.ones(len(p1), dtype=bool)
    for ax, lo, hi in ((0, xmin, xmax), (1, ymin, ymax)):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo - p0[:, ax]) / d[:, ax]
            tb = (hi - p0[:, ax]) / d[:, ax]
        parallel = d[:, ax] == 0
        inside = (p0[:, ax] >= lo) & (p0[:, ax] <= hi)
        hit &= ~parallel | inside
        near = np.where(parallel, -np.inf, np.minimum(ta, tb))
        far = np.where(parallel, np.inf, np.maximum(ta, tb))
        t0 = np.maximum(t0, near)
        t1 = np.minimum(t1, far)
    return hit & (t0 <= t1)


def obstacle_blockage_mask(scene: SceneConfig, grid: GridMap,
                           obstacles: Iterable[tuple[tuple[float, float], tuple[float, float]]]
                           ) -> set[tuple[int, int]]:
    """Static blockage pairs ``(flat cell, path)`` cast by rectangular obstacles.

    Each obstacle is ``((xmin, ymin), (xmax, ymax))`` in metres. Path 0 is
    line of sight; path ``k`` reflects off ``scene.scatterers[k - 1]``.
    """
    centers = grid.cell_centers()
    bs = np.asarray(scene.bs_position, dtype=float)
    blocked = np.zeros((grid.num_cells, scene.num_paths), dtype=bool)
    for box in obstacles:
        blocked[:, 0] |= _segment_hits_box(bs[None, :], centers, box)
        for k, s in enumerate(scene.scatterers, start=1):
            sp = np.asarray(s.position, dtype=float)
            first_leg = _segment_hits_box(bs[None, :], sp[None, :], box)[0]
            blocked[:, k] |= first_leg | _segment_hits_box(sp[None, :], centers, box)
    cells, paths = np.nonzero(blocked)
    return set(zip(cells.tolist(), paths.tolist()))


def generate_synthetic(scene: SceneConfig, grid: GridMap, codebook: CodebookConfig,
                       static_blockage: Iterable[tuple[int, int]] = ()) -> FingerprintDatabase:
    """Sum per-path power times array gain at each cell, in dB.

    ``static_blockage`` holds ``(flat cell index, path index)`` pairs whose
    path is removed. Results are clamped to [floor, reference + 10 log10 N].
    """
    if codebook.num_rx_beams != 1:
        raise ValueError("synthetic generator models a single-antenna receiver")
    centers = grid.cell_centers()
    bs = np.asarray(scene.bs_position, dtype=float)
    rel = centers - bs
    dist = np.hypot(rel[:, 0], rel[:, 1])
    if np.any(dist == 0):
        raise ValueError("a cell centre coincides with the BS position")

    ref = 10.0 ** (scene.reference_gain_db / 10.0)
    n = scene.path_loss_exponent
    keep = np.ones((grid.num_cells, scene.num_paths))
    for cell, path in static_blockage:
        keep[cell, path] = 0.0

    # Departure angle from broadside (+y axis), array along x.
    aod = np.arctan2(rel[:, 0], rel[:, 1])
    power = (ref * dist ** (-n) * keep[:, 0])[:, None] * steering_gain_matrix(codebook, aod)
    for k, s in enumerate(scene.scatterers, start=1):
        sp = np.asarray(s.position, dtype=float)
        d1 = float(np.hypot(*(sp - bs)))
        if d1 == 0:
            raise ValueError("scatterer coincides with the BS position")
        d2 = np.hypot(*(centers - sp).T)
        path_gain = ref * (d1 + d2) ** (-n) * 10.0 ** (-s.reflection_loss_db / 10.0)
        s_aod = np.arctan2(sp[0] - bs[0], sp[1] - bs[1])
        power += (path_gain * keep[:, k])[:, None] * steering_gain_matrix(codebook, [s_aod])

    with np.errstate(divide="ignore"):
        gains = 10.0 * np.log10(power)
    ceiling = scene.reference_gain_db + 10.0 * np.log10(codebook.num_elements)
    gains = np.minimum(gains, ceiling)
    floor = scene.shadow_floor_db
    if floor is None:
        finite = gains[np.isfinite(gains)]
        floor = (finite.max() if finite.size else ceiling) - 40.0
    gains = np.maximum(gains, floor)
    return FingerprintDatabase(grid, gains.astype(np.float32), codebook, float(floor))


def save(db: FingerprintDatabase, path) -> None:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, db.grid.length_cells, db.grid.width_cells,
                          db.grid.resolution, db.num_beams)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(db.gains_db.astype("<f4").tobytes(order="C"))


def load(path, codebook: Optional[CodebookConfig] = None,
         grid: Optional[GridMap] = None) -> FingerprintDatabase:
    """Read a fingerprint file.

    If ``codebook`` or ``grid`` is given, the header must agree with it.
    Without a codebook, a transmit-only codebook of the stored size is assumed.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header needs {_HEADER.size} bytes, got {len(raw)}")
    magic, version, l1, l2, res, m = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FingerprintFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {FORMAT_VERSION}")
    if l1 == 0 or l2 == 0 or m == 0 or not res > 0:
        raise DimensionMismatchError(f"{path}: degenerate dimensions {l1}x{l2}, M={m}")
    if codebook is not None and codebook.size != m:
        raise DimensionMismatchError(f"{path}: file has M={m}, codebook has {codebook.size}")
    if grid is not None and (grid.length_cells, grid.width_cells) != (l1, l2):
        raise DimensionMismatchError(f"{path}: file grid {l1}x{l2}, expected {grid.shape}")
    expected = l1 * l2 * m * 4
    payload = len(raw) - _HEADER.size
    if payload != expected:
        raise TruncatedFileError(f"{path}: payload {payload} bytes, header implies {expected}")
    gains = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(l1 * l2, m)
    grid = GridMap(l1, l2, float(res)) if grid is None else grid
    codebook = CodebookConfig(num_tx_beams=m) if codebook is None else codebook
    return FingerprintDatabase(grid, gains.astype(np.float32), codebook)


def from_field(values: np.ndarray, resolution: float = 0.1,
               codebook: Optional[CodebookConfig] = None) -> FingerprintDatabase:
    """Wrap an explicit ``(length, width, M)`` gain array as a database."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, :, None]
    l1, l2, m = values.shape
    codebook = codebook or CodebookConfig(num_tx_beams=m)
    return FingerprintDatabase(GridMap(l1, l2, resolution),
                               values.reshape(l1 * l2, m).astype(np.float32), codebook)


def street_obstacles() -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Rectangles shadowing parts of the default street."""
    return [((18.0, -6.0), (22.0, -4.0))]


def default_street_scene() -> SceneConfig:
    """BS 15 m off the near kerb, three facade reflectors across the street.

    The obstacle from ``street_obstacles`` sits between the BS and the
    street and shadows the line of sight for x between roughly 16 m and 24 m.
    """
    return SceneConfig(
        bs_position=(20.0, -15.0),
        scatterers=(Scatterer((12.0, 14.0), 6.0),
                    Scatterer((42.0, 14.0), 6.0),
                    Scatterer((65.0, 14.0), 8.0)),
    )


def default_street_database(grid: Optional[GridMap] = None,
                            codebook: Optional[CodebookConfig] = None) -> FingerprintDatabase:
    """Synthetic 100 m x 4 m street at 0.1 m resolution with a 64-beam ULA."""
    grid = grid or GridMap.from_meters(100.0, 4.0, 0.1)
    codebook = codebook or CodebookConfig()
    scene = default_street_scene()
    mask = obstacle_blockage_mask(scene, grid, street_obstacles())
    return generate_synthetic(scene, grid, codebook, mask)
