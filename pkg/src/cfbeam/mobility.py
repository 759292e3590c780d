"""Ground truth: user motion on the grid and per-frame realized beam gains."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .fingerprint import Cell, FingerprintDatabase, GridMap


@dataclass(frozen=True)
class MobilityModel:
    """Linear motion with a discretized Gaussian location error.

    ``sigma_w`` is the error scale in cells; the per-axis error covariance
    defaults to ``diag(sigma_w**2 / 2, sigma_w**2 / 2)``.
    """

    velocity: tuple[int, int] = (3, 0)  # cells per frame
    frame_interval: float = 0.02
    sigma_w: float = 1.0
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        v = tuple(self.velocity)
        if any(float(c) != int(c) for c in v):
            raise ValueError(f"velocity {v} must be integer cells per frame")
        object.__setattr__(self, "velocity", (int(v[0]), int(v[1])))
        if self.sigma_w < 0:
            raise ValueError("sigma_w must be >= 0")
        cov = self.covariance
        if cov is None:
            cov = np.eye(2) * self.sigma_w**2 / 2.0
        cov = np.array(cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise ValueError("covariance must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("covariance must be positive semidefinite")
        cov.flags.writeable = False
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class TransitionKernel:
    offsets: np.ndarray  # int, shape (K, 2)
    probabilities: np.ndarray  # shape (K,)
    # Per-axis stencils over -R..R when the kernel is an outer product.
    factors: Optional[tuple[np.ndarray, np.ndarray]] = None

    @property
    def radius(self) -> int:
        return int(np.abs(self.offsets).max()) if len(self.offsets) else 0

    def as_array(self) -> np.ndarray:
        """Dense (2R+1, 2R+1) stencil; entry [a+R, b+R] is P(offset (a, b))."""
        r = self.radius
        out = np.zeros((2 * r + 1, 2 * r + 1))
        out[self.offsets[:, 0] + r, self.offsets[:, 1] + r] = self.probabilities
        return out

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        idx = rng.choice(len(self.probabilities), size=size, p=self.probabilities)
        return self.offsets[idx]


@dataclass(frozen=True)
class BlockageModel:
    alpha: float = 0.8  # probability of the unblocked state
    sigma_v: float = 6.0  # small-scale fading std, dB
    blocked_gain_db: float = 0.0
    shared_fading: bool = False  # one fading draw for all beams of a frame

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be >= 0")


@dataclass(frozen=True)
class ChannelRealization:
    frame: int
    true_cell: Cell
    gains_db: np.ndarray
    blockage: np.ndarray  # True = unblocked (delta_i = 1)

    def best_beam(self) -> int:
        return int(np.argmax(self.gains_db))


def _interval_mass(var: float, steps: np.ndarray) -> np.ndarray:
    """1-D zero-mean Gaussian mass of [k - 1/2, k + 1/2] for each integer k."""
    if var == 0:
        return (steps == 0).astype(float)
    sd = math.sqrt(var)
    return ndtr((steps + 0.5) / sd) - ndtr((steps - 0.5) / sd)


def build_transition_kernel(model: MobilityModel) -> TransitionKernel:
    """Discretized zero-mean Gaussian location error.

    Each integer offset gets the Gaussian mass of the unit square centred
    on it. Support is truncated to ``|a|, |b| <= ceil(3 sigma_w)`` and
    renormalized.
    """
    cov = model.covariance
    if np.allclose(cov, 0.0) or model.sigma_w == 0:
        return TransitionKernel(np.zeros((1, 2), dtype=int), np.ones(1))
    r = max(1, math.ceil(3.0 * model.sigma_w))
    steps = np.arange(-r, r + 1)
    a, b = np.meshgrid(steps, steps, indexing="ij")
    offsets = np.stack([a.ravel(), b.ravel()], axis=1)
    factors = None
    if cov[0, 1] == 0:
        # Independent axes: the truncated, renormalized kernel factorizes.
        u = _interval_mass(cov[0, 0], steps)
        v = _interval_mass(cov[1, 1], steps)
        factors = (u / u.sum(), v / v.sum())
        mass = np.outer(*factors).ravel()
    else:
        mvn = stats.multivariate_normal(mean=np.zeros(2), cov=cov, allow_singular=True)
        mass = np.array([mvn.cdf(o + 0.5, lower_limit=o - 0.5) for o in offsets])
        mass = mass / mass.sum()
    keep = mass > 0
    return TransitionKernel(offsets[keep].astype(int), mass[keep], factors)


def step_true_location(cell, model: MobilityModel, kernel: TransitionKernel,
                       rng: np.random.Generator, grid: GridMap) -> Cell:
    offset = kernel.sample(rng)
    return grid.clamp((cell[0] + model.velocity[0] + offset[0],
                       cell[1] + model.velocity[1] + offset[1]))


def realize_channel(db: FingerprintDatabase, cell, blockage: BlockageModel,
                    rng: np.random.Generator, frame: int = 0) -> ChannelRealization:
    """Draw blockage states and fading for every beam at ``cell``.

    gamma_i = delta_i * g_i + (1 - delta_i) * blocked_gain + n_V.
    """
    g = db.gains_at(cell)
    m = g.shape[0]
    unblocked = rng.random(m) < blockage.alpha
    if blockage.shared_fading:
        noise = np.full(m, rng.normal(0.0, 1.0)) * blockage.sigma_v
    else:
        noise = rng.normal(0.0, 1.0, size=m) * blockage.sigma_v
    gains = np.where(unblocked, g, blockage.blocked_gain_db) + noise
    return ChannelRealization(frame, Cell(int(cell[0]), int(cell[1])), gains, unblocked)
