"""Comparison schemes that use no fingerprint: periodic full sweep and local search."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mobility import ChannelRealization


class Scheme(enum.Enum):
    EXHAUSTIVE = "exhaustive"
    SWEEP_AROUND = "sweep_around"


@dataclass
class BaselineState:
    current_beam: int
    scheme: Scheme
    counter: int = 0  # frame position inside the sweep period


def sweep_period(num_beams: int, budget: int) -> int:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    return math.ceil(num_beams / budget)


def sweep_window(current: int, budget: int, num_beams: int) -> list[int]:
    """``budget`` consecutive indices around ``current``, sliding inward at the ends.

    Even budgets reach one further up than down (offsets -(T/2 - 1) .. T/2).
    """
    size = min(budget, num_beams)
    start = current - (size - 1) // 2
    start = min(max(start, 0), num_beams - size)
    return list(range(start, start + size))


def _readout(channel: ChannelRealization, beams: Sequence[int]) -> list[tuple[int, float]]:
    return [(int(b), float(channel.gains_db[b])) for b in beams]


def _best(results: Sequence[tuple[int, float]]) -> int:
    return results[int(np.argmax([g for _, g in results]))][0]


def exhaustive_sweep_step(state: BaselineState, channel: ChannelRealization, budget: int,
                          num_beams: int) -> tuple[list[int], int]:
    """Train the whole codebook once per period, hold the beam in between."""
    period = sweep_period(num_beams, budget)
    training: list[int] = []
    if state.counter == 0:
        training = list(range(num_beams))
        state.current_beam = _best(_readout(channel, training))
    state.counter = (state.counter + 1) % period
    return training, state.current_beam


def sweep_around_current_step(state: BaselineState, channel: ChannelRealization, budget: int,
                              num_beams: int) -> tuple[list[int], int]:
    training = sweep_window(state.current_beam, budget, num_beams)
    state.current_beam = _best(_readout(channel, training))
    return training, state.current_beam


class ExhaustiveSweep:
    """Harness adapter for the periodic full sweep.

    ``mode="burst"`` trains all M beams in one frame every ceil(M/T)
    frames. ``mode="rotate"`` trains T beams per frame in a round robin and
    transmits on the best entry of the last-measured table.
    """

    name = "exhaustive"

    def __init__(self, num_beams: int, budget: int, initial_beam: int, mode: str = "burst"):
        if mode not in ("burst", "rotate"):
            raise ValueError(f"unknown exhaustive mode {mode!r}")
        self.num_beams = num_beams
        self.budget = budget
        self.mode = mode
        self.period = sweep_period(num_beams, budget)
        self.state = BaselineState(initial_beam, Scheme.EXHAUSTIVE)
        self.table = np.full(num_beams, -np.inf)

    def begin_frame(self) -> list[int]:
        k = self.state.counter
        self.state.counter = (k + 1) % self.period
        if self.mode == "burst":
            return list(range(self.num_beams)) if k == 0 else []
        return sorted({(k * self.budget + j) % self.num_beams for j in range(self.budget)})

    def end_frame(self, results: Sequence[tuple[int, float]]) -> int:
        if self.mode == "burst":
            if results:
                self.state.current_beam = _best(results)
            return self.state.current_beam
        for b, g in results:
            self.table[b] = g
        self.state.current_beam = int(np.argmax(self.table))
        return self.state.current_beam


class SweepAroundCurrent:
    """Harness adapter: retrain the window around the last chosen beam."""

    name = "sweep_around"

    def __init__(self, num_beams: int, budget: int, initial_beam: int):
        self.num_beams = num_beams
        self.budget = budget
        self.state = BaselineState(initial_beam, Scheme.SWEEP_AROUND)

    def begin_frame(self) -> list[int]:
        return sweep_window(self.state.current_beam, self.budget, self.num_beams)

    def end_frame(self, results: Sequence[tuple[int, float]]) -> int:
        if results:
            self.state.current_beam = _best(results)
        return self.state.current_beam
