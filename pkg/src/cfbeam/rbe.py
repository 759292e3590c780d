"""Grid-based recursive Bayesian beam tracker.

The belief is a probability mass function over all grid cells. Each frame
shifts it by the known velocity, blurs it with the transition kernel, picks
the beams with the largest expected gain for training, applies Bayes' rule
with the blockage-mixture likelihood and estimates untrained gains from the
posterior.

All cell loops are restricted to the band of rows holding nonzero mass.
Setting ``prune_below`` zeroes posterior entries below that value, which
keeps the band narrow at the cost of exactness; it is off by default here
and switched on by the simulation harness.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import convolve2d

from .fingerprint import FingerprintDatabase, GridMap
from .mobility import BlockageModel, TransitionKernel

logger = logging.getLogger(__name__)

# Simulation default for dropping negligible posterior mass (see SimConfig).
PRUNE_BELOW = 1e-15


@dataclass
class LocationPmf:
    probabilities: np.ndarray  # shape (length_cells, width_cells)
    underflow: bool = False  # set when an update fell back to the prior
    # Row band [lo, hi) known to contain all mass; recomputed when None.
    rows: Optional[tuple[int, int]] = field(default=None, repr=False, compare=False)

    @classmethod
    def point_mass(cls, grid: GridMap, cell) -> "LocationPmf":
        grid.check(cell)
        p = np.zeros(grid.shape)
        p[int(cell[0]), int(cell[1])] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, grid: GridMap) -> "LocationPmf":
        return cls(np.full(grid.shape, 1.0 / grid.num_cells))

    def total(self) -> float:
        return float(self.probabilities.sum())

    def support_rows(self) -> tuple[int, int]:
        if self.rows is None:
            self.rows = _nonzero_band(self.probabilities, 0)
        return self.rows


def _nonzero_band(p: np.ndarray, offset: int) -> tuple[int, int]:
    rows = np.flatnonzero(p.any(axis=1))
    if rows.size == 0:
        raise ValueError("belief has no mass")
    return offset + int(rows[0]), offset + int(rows[-1]) + 1


@dataclass
class RbeState:
    belief: LocationPmf
    frame: int = 0
    training: list[int] = field(default_factory=list)
    estimated_gains: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _fold_matrix(targets: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """One-hot map from padded positions onto clamped grid positions lo..hi-1."""
    out = np.zeros((len(targets), hi - lo))
    out[np.arange(len(targets)), targets - lo] = 1.0
    return out


def _separable_full(band: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full 2-D convolution of ``band`` with the outer product of ``u`` and ``v``."""
    h, w = band.shape
    rows = np.zeros((h + len(u) - 1, w))
    for a, q in enumerate(u):
        if q:
            rows[a:a + h] += q * band
    out = np.zeros((rows.shape[0], w + len(v) - 1))
    for b, q in enumerate(v):
        if q:
            out[:, b:b + w] += q * rows
    return out


def rbe_predict(belief: LocationPmf, kernel: TransitionKernel, velocity,
                boundary: str = "clamp") -> LocationPmf:
    """Shift by velocity and convolve with the error kernel.

    With ``boundary="clamp"`` mass pushed off the grid piles up on the edge
    cells; ``"wrap"`` treats the grid as a torus.
    """
    p = belief.probabilities
    l1, l2 = p.shape
    lo, hi = belief.support_rows()
    if kernel.factors is not None:
        r = len(kernel.factors[0]) // 2
        spread = _separable_full(p[lo:hi], *kernel.factors)
    else:
        r = kernel.radius
        spread = convolve2d(p[lo:hi], kernel.as_array(), mode="full")
    rows = np.arange(lo - r, hi + r) + int(velocity[0])
    cols = np.arange(-r, l2 + r) + int(velocity[1])
    if boundary == "clamp":
        rows = np.clip(rows, 0, l1 - 1)
        cols = np.clip(cols, 0, l2 - 1)
        r_lo, r_hi = int(rows[0]), int(rows[-1]) + 1
    elif boundary == "wrap":
        rows, cols = rows % l1, cols % l2
        r_lo, r_hi = 0, l1
    else:
        raise ValueError(f"unknown boundary rule {boundary!r}")
    folded = spread @ _fold_matrix(cols, 0, l2)
    out = np.zeros_like(p)
    out[r_lo:r_hi] = _fold_matrix(rows, r_lo, r_hi).T @ folded
    out /= out.sum()
    return LocationPmf(out, rows=(r_lo, r_hi))


def expected_gains(belief: LocationPmf, db: FingerprintDatabase) -> np.ndarray:
    """Belief-weighted mean of every beam's fingerprint (dB), belief normalized here."""
    lo, hi = belief.support_rows()
    p = belief.probabilities[lo:hi].reshape(-1)
    g = db.gain_field[lo:hi].reshape(-1, db.num_beams)
    return (p @ g) / p.sum()


def top_beams(scores: np.ndarray, budget: int) -> list[int]:
    """Indices of the ``budget`` largest scores, best first, ties to lower index."""
    if budget > len(scores):
        raise ValueError(f"budget {budget} exceeds codebook size {len(scores)}")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    return [int(i) for i in np.argsort(-scores, kind="stable")[:budget]]


def rbe_select_training(belief: LocationPmf, db: FingerprintDatabase, alpha: float,
                        budget: int) -> list[int]:
    return top_beams(alpha * expected_gains(belief, db), budget)


def _gauss_exponent(residual, sigma: float):
    """-residual^2 / (2 sigma^2); the sigma -> 0 limit is 0 on exact match, else -inf."""
    residual = np.asarray(residual, dtype=float)
    if sigma > 0:
        return -(residual**2) / (2.0 * sigma**2)
    return np.where(residual == 0, 0.0, -np.inf)


def log_likelihood(gains: np.ndarray, measured: np.ndarray, blockage: BlockageModel) -> np.ndarray:
    """Log of the blockage-mixture likelihood, summed over the trailing beam axis.

    ``gains`` holds fingerprint values with beams on the last axis; the
    constant Gaussian normalizer is dropped.
    """
    with np.errstate(divide="ignore"):
        log_a = np.log(blockage.alpha)
        log_b = np.log1p(-blockage.alpha)
    unblocked = log_a + _gauss_exponent(measured - gains, blockage.sigma_v)
    blocked = log_b + _gauss_exponent(measured - blockage.blocked_gain_db, blockage.sigma_v)
    return np.logaddexp(unblocked, blocked).sum(axis=-1)


def rbe_update(belief: LocationPmf, training: Sequence[tuple[int, float]],
               db: FingerprintDatabase, blockage: BlockageModel,
               prune_below: float = 0.0) -> LocationPmf:
    if not training:
        raise ValueError("rbe_update needs at least one training result")
    beams = np.array([b for b, _ in training], dtype=int)
    measured = np.array([g for _, g in training], dtype=float)
    p = belief.probabilities
    lo, hi = belief.support_rows()
    ll = log_likelihood(db.gain_field[lo:hi][:, :, beams], measured, blockage)
    with np.errstate(divide="ignore"):
        w = np.log(p[lo:hi]) + ll
    top = w.max()
    if not np.isfinite(top):
        logger.debug("likelihood underflow on every cell; keeping the prior")
        return LocationPmf(p.copy(), underflow=True, rows=(lo, hi))
    post = np.exp(w - top)
    post /= post.sum()
    if prune_below > 0:
        post[post < prune_below] = 0.0
        post /= post.sum()
    out = np.zeros_like(p)
    out[lo:hi] = post
    return LocationPmf(out, rows=_nonzero_band(post, lo))


def rbe_estimate_location(belief: LocationPmf) -> np.ndarray:
    p = belief.probabilities
    lo, hi = belief.support_rows()
    band = p[lo:hi]
    total = band.sum()
    x1 = (band.sum(axis=1) @ np.arange(lo, hi)) / total
    x2 = (band.sum(axis=0) @ np.arange(p.shape[1])) / total
    return np.array([x1, x2])


def rbe_estimate_gains(belief: LocationPmf, db: FingerprintDatabase, alpha: float,
                       trained: Sequence[tuple[int, float]]) -> np.ndarray:
    est = alpha * expected_gains(belief, db)
    for beam, gamma in trained:
        est[beam] = gamma
    return est


def rbe_choose_beam(estimated: np.ndarray) -> int:
    return int(np.argmax(estimated))


class RbeTracker:
    """Frame loop driver holding one run's belief."""

    name = "rbe"

    def __init__(self, db: FingerprintDatabase, kernel: TransitionKernel, velocity,
                 blockage: BlockageModel, budget: int, initial: LocationPmf,
                 prune_below: float = 0.0):
        if budget > db.num_beams:
            raise ValueError("budget exceeds codebook size")
        self.db = db
        self.kernel = kernel
        self.velocity = tuple(int(v) for v in velocity)
        self.blockage = blockage
        self.budget = budget
        self.prune_below = prune_below
        self.state = RbeState(initial)
        self.underflows = 0

    def begin_frame(self) -> list[int]:
        prior = rbe_predict(self.state.belief, self.kernel, self.velocity)
        self.state.belief = prior
        self.state.frame += 1
        self.state.training = rbe_select_training(prior, self.db, self.blockage.alpha, self.budget)
        return list(self.state.training)

    def end_frame(self, results: Sequence[tuple[int, float]]) -> int:
        belief = self.state.belief
        if results:
            belief = rbe_update(belief, results, self.db, self.blockage, self.prune_below)
            self.underflows += belief.underflow
        self.state.belief = belief
        self.state.estimated_gains = rbe_estimate_gains(belief, self.db, self.blockage.alpha,
                                                        results)
        return rbe_choose_beam(self.state.estimated_gains)

    @property
    def location_estimate(self) -> np.ndarray:
        return rbe_estimate_location(self.state.belief)
