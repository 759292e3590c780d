"""Point-estimate beam tracker: an extended Kalman filter on the fingerprint field.

The measurement model is the per-beam fingerprint ``g_i(x)``, linearized at
the prior estimate through its discrete spatial gradient. Training results
judged blocked by a per-beam MAP test are dropped before the update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fingerprint import FingerprintDatabase, GridMap
from .rbe import top_beams

SINGULAR_EPS = 1e-9


@dataclass
class EkfState:
    location: np.ndarray  # real-valued, cells
    covariance: np.ndarray  # 2x2, cells^2
    frame: int = 0

    def __post_init__(self):
        self.location = np.asarray(self.location, dtype=float).copy()
        self.covariance = np.asarray(self.covariance, dtype=float).copy()


@dataclass(frozen=True)
class BlockageDecision:
    beams: tuple[int, ...]
    unblocked: tuple[bool, ...]  # delta-hat per beam
    thresholds: tuple[float, ...]  # dB; nan where no threshold applies

    def effective(self, results: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
        keep = dict(zip(self.beams, self.unblocked))
        return [(b, g) for b, g in results if keep[b]]


def _clamp_location(x: np.ndarray, grid: GridMap) -> np.ndarray:
    return np.clip(x, 0.0, [grid.length_cells - 1, grid.width_cells - 1])


def ekf_predict(state: EkfState, velocity, sigma_w: float, grid: GridMap) -> EkfState:
    location = _clamp_location(state.location + np.asarray(velocity, dtype=float), grid)
    return EkfState(location, state.covariance + sigma_w**2 * np.eye(2), state.frame + 1)


def ekf_select_training(state: EkfState, db: FingerprintDatabase, alpha: float,
                        budget: int) -> list[int]:
    cell = db.grid.nearest_cell(state.location)
    return top_beams(alpha * db.gains_at(cell), budget)


def map_threshold(g: float, alpha: float, sigma_v: float) -> float:
    """Decision boundary between the blocked and unblocked mixture components."""
    return 0.5 * g - sigma_v**2 * math.log(alpha / (1.0 - alpha)) / g


def ekf_detect_blockage(trained: Sequence[tuple[int, float]], predicted: Sequence[float],
                        alpha: float, sigma_v: float) -> BlockageDecision:
    """MAP test per trained beam; ``predicted[k]`` is the fingerprint of ``trained[k]``.

    The unblocked state wins iff
    ``ln(alpha/(1-alpha)) + (2 gamma g - g^2) / (2 sigma_v^2) > 0``. For g > 0
    this is ``gamma > threshold``; for g < 0 the inequality flips.
    """
    beams, flags, thresholds = [], [], []
    for (beam, gamma), g in zip(trained, predicted):
        g = float(g)
        thr = math.nan
        if alpha >= 1.0:
            ok = True
        elif alpha <= 0.0:
            ok = False
        elif sigma_v == 0.0:
            # No fading: the result sits exactly on one component mean.
            ok = abs(gamma - g) < abs(gamma) or (gamma == g and alpha > 0.5)
        elif g == 0.0:
            # Identical component likelihoods; the prior decides.
            ok = alpha > 0.5
        else:
            thr = map_threshold(g, alpha, sigma_v)
            ok = gamma > thr if g > 0 else gamma < thr
        beams.append(int(beam))
        flags.append(bool(ok))
        thresholds.append(thr)
    return BlockageDecision(tuple(beams), tuple(flags), tuple(thresholds))


def ekf_update(prior: EkfState, effective: Sequence[tuple[int, float]],
               db: FingerprintDatabase, sigma_v: float) -> EkfState:
    """Kalman correction with the unblocked training results.

    The measurement prediction is the fingerprint at the nearest cell plus
    the first-order gradient correction to the exact prior location, so the
    step is exact on affine fingerprints.
    """
    if not effective:
        return EkfState(prior.location, prior.covariance, prior.frame)
    cell = db.grid.nearest_cell(prior.location)
    beams = np.array([b for b, _ in effective], dtype=int)
    measured = np.array([g for _, g in effective], dtype=float)
    jac = db.gradients[cell[0], cell[1], beams]  # (k, 2)
    predicted = db.gain_field[cell[0], cell[1], beams] + jac @ (prior.location - np.asarray(cell))
    p = prior.covariance
    s = jac @ p @ jac.T + sigma_v**2 * np.eye(len(beams))
    if sigma_v == 0.0:
        s += SINGULAR_EPS * np.eye(len(beams))
    gain = np.linalg.solve(s, jac @ p).T  # P J^T S^-1, using symmetry of P and S
    location = _clamp_location(prior.location + gain @ (measured - predicted), db.grid)
    cov = (np.eye(2) - gain @ jac) @ p
    cov = 0.5 * (cov + cov.T)
    return EkfState(location, cov, prior.frame)


def ekf_estimate_gains(state: EkfState, db: FingerprintDatabase, alpha: float,
                       trained: Sequence[tuple[int, float]]) -> np.ndarray:
    est = alpha * db.gains_at(db.grid.nearest_cell(state.location))
    for beam, gamma in trained:
        est[beam] = gamma
    return est


class EkfTracker:
    """Frame loop driver holding one run's point estimate."""

    name = "ekf"

    def __init__(self, db: FingerprintDatabase, velocity, sigma_w: float, alpha: float,
                 sigma_v: float, budget: int, initial_location,
                 initial_covariance: Optional[np.ndarray] = None):
        if budget > db.num_beams:
            raise ValueError("budget exceeds codebook size")
        self.db = db
        self.velocity = np.asarray(velocity, dtype=float)
        self.sigma_w = sigma_w
        self.alpha = alpha
        self.sigma_v = sigma_v
        self.budget = budget
        if initial_covariance is None:
            initial_covariance = sigma_w**2 * np.eye(2)
        self.state = EkfState(initial_location, initial_covariance)
        self.training: list[int] = []
        self.decision: Optional[BlockageDecision] = None

    def begin_frame(self) -> list[int]:
        self.state = ekf_predict(self.state, self.velocity, self.sigma_w, self.db.grid)
        self.training = ekf_select_training(self.state, self.db, self.alpha, self.budget)
        return list(self.training)

    def end_frame(self, results: Sequence[tuple[int, float]]) -> int:
        prior_gains = self.db.gains_at(self.db.grid.nearest_cell(self.state.location))
        self.decision = ekf_detect_blockage(results, [prior_gains[b] for b, _ in results],
                                            self.alpha, self.sigma_v)
        self.state = ekf_update(self.state, self.decision.effective(results), self.db,
                                self.sigma_v)
        return int(np.argmax(ekf_estimate_gains(self.state, self.db, self.alpha, results)))

    @property
    def location_estimate(self) -> np.ndarray:
        return self.state.location.copy()
