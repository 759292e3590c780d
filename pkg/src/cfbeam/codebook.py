"""Beam codebook of a uniform linear array with progressive phase shifters.

Beam ``i`` of the joint codebook maps to transmit beam ``i // num_rx_beams``
and receive beam ``i % num_rx_beams``. Transmit beams are placed uniformly in
sin-angle over [-1, 1), so neighbouring indices are neighbouring directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CodebookConfig:
    num_tx_beams: int = 64
    num_rx_beams: int = 1
    carrier_frequency: float = 28e9  # Hz
    element_spacing: float = 0.5  # wavelengths

    def __post_init__(self):
        if self.num_tx_beams < 1 or self.num_rx_beams < 1:
            raise ValueError("codebook sizes must be positive")
        if not self.element_spacing > 0:
            raise ValueError("element_spacing must be > 0")

    @property
    def size(self) -> int:
        """Total number of beam configurations M."""
        return self.num_tx_beams * self.num_rx_beams

    @property
    def num_elements(self) -> int:
        # One transmit beam per array element (DFT-style codebook).
        return self.num_tx_beams

    def tx_index(self, beam: int) -> int:
        self.check_beam(beam)
        return beam // self.num_rx_beams

    def check_beam(self, beam: int) -> None:
        if not 0 <= beam < self.size:
            raise IndexError(f"beam {beam} outside codebook of size {self.size}")


def beam_steering_sines(config: CodebookConfig) -> np.ndarray:
    n = config.num_tx_beams
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def beam_steering_angles(config: CodebookConfig) -> np.ndarray:
    """Steering angle (radians from broadside) of every transmit beam."""
    return np.arcsin(beam_steering_sines(config))


def array_factor(num_elements: int, spacing: float, angle, steer_angle) -> np.ndarray:
    """Normalized power pattern |sum_m exp(j 2 pi d m (sin a - sin s))|^2 / N.

    Evaluated in closed (Dirichlet kernel) form; peaks at N when ``angle``
    equals ``steer_angle``. Broadcasts over both angle arguments.
    """
    psi = 2.0 * np.pi * spacing * (np.sin(angle) - np.sin(steer_angle))
    half = 0.5 * psi
    den = np.sin(half)
    num = np.sin(num_elements * half)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num**2 / (num_elements * den**2)
    # At grating/main lobe peaks the kernel tends to N.
    return np.where(np.abs(den) < 1e-12, float(num_elements), ratio)


def steering_gain(config: CodebookConfig, beam: int, angle) -> np.ndarray:
    """Linear transmit power gain of ``beam`` toward departure ``angle``."""
    steer = beam_steering_angles(config)[config.tx_index(beam)]
    return array_factor(config.num_elements, config.element_spacing, angle, steer)


def steering_gain_matrix(config: CodebookConfig, angles) -> np.ndarray:
    """Gains of every joint beam toward every angle, shape (len(angles), M).

    The receive side is a single omnidirectional element, so all receive
    beams of one transmit beam share a column value.
    """
    angles = np.asarray(angles, dtype=float).reshape(-1, 1)
    tx = array_factor(config.num_elements, config.element_spacing,
                      angles, beam_steering_angles(config)[None, :])
    return np.repeat(tx, config.num_rx_beams, axis=1)
