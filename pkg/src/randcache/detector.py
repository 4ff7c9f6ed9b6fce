"""Eviction-concentration attack detector.

Samples the per-set demand-eviction histogram every `sample_period` LLC
accesses, standardizes it with a non-centered Z-score, weights each score
by how far the set's eviction count sits above the mean, and accumulates
the weighted scores in an exponential moving average.  A set whose EMA
score reaches the threshold indicates an eviction-set search in progress
and requests a remap.

Scores for a window with evictions e_i over bins i (S bins total):

    z_i  = e_i / sqrt(sum(e^2) / (S - 1))      (z_i := 0 when sum(e^2) = 0)
    wz_i = (e_i - mean(e)) * z_i
    az_i <- (1 - alpha) * az_i + alpha * wz_i

An idealized single-set burst of W evictions in one window scores
wz ~= W * sqrt(S), while a lone stray eviction only reaches ~sqrt(S),
which is what makes the weighting robust against quiet workloads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np


@dataclass
class DetectorConfig:
    sample_period: int = 4096   # LLC accesses per sample window
    alpha: float = 1.0 / 32.0   # EMA discount factor
    threshold: float = 5.0      # az level that fires a remap

    def __post_init__(self):
        if self.sample_period < 1:
            raise ValueError("sample_period must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")


class WindowReport(NamedTuple):
    max_az: float
    fired: bool


class Detector:
    """Windowed eviction-histogram detector over `bins` cache sets.

    For a skewed cache each (partition, set) pair gets its own bin.
    The caller drives it through `record_access` / `record_eviction`;
    `record_access` returns a WindowReport exactly when it closes a
    sample window.
    """

    __slots__ = ("config", "bins", "ev", "az", "accesses_in_window",
                 "windows", "firings", "_norm", "trace_sink")

    def __init__(self, config: DetectorConfig, bins: int,
                 trace_sink: Callable[[int, int, float, float, float], None] | None = None):
        if bins < 2:
            raise ValueError("need at least two bins")
        self.config = config
        self.bins = bins
        self.ev = np.zeros(bins, dtype=np.int64)
        self.az = np.zeros(bins, dtype=np.float64)
        self.accesses_in_window = 0
        self.windows = 0
        self.firings = 0
        self._norm = 1.0 / math.sqrt(bins - 1)
        # trace_sink(window, bin, e, wz, az) is called per active bin when set
        self.trace_sink = trace_sink

    def record_access(self) -> WindowReport | None:
        """Count one LLC access; closes the window at the sample period."""
        self.accesses_in_window += 1
        if self.accesses_in_window >= self.config.sample_period:
            return self.end_window()
        return None

    def record_eviction(self, bin_index: int) -> None:
        """Count one demand eviction on a cache set."""
        self.ev[bin_index] += 1

    def end_window(self) -> WindowReport:
        """Score the current histogram, fold it into the EMA, reset it."""
        ev = self.ev
        cfg = self.config
        sumsq = float(np.dot(ev, ev))
        if sumsq > 0.0:
            z = ev * (1.0 / (math.sqrt(sumsq) * self._norm))
            wz = (ev - ev.mean()) * z
        else:
            wz = 0.0
        self.az *= 1.0 - cfg.alpha
        if sumsq > 0.0:
            self.az += cfg.alpha * wz
        max_az = float(self.az.max())
        fired = max_az >= cfg.threshold
        if fired:
            self.firings += 1
        if self.trace_sink is not None:
            self._emit_trace(wz if sumsq > 0.0 else np.zeros(1))
        self.windows += 1
        ev[:] = 0
        self.accesses_in_window = 0
        return WindowReport(max_az, fired)

    def reset(self) -> None:
        """Clear histogram, scores and window clock (used on remap)."""
        self.ev[:] = 0
        self.az[:] = 0.0
        self.accesses_in_window = 0

    def _emit_trace(self, wz) -> None:
        active = np.nonzero((self.ev > 0) | (self.az > 1e-3))[0]
        for i in active:
            w = float(wz[i]) if wz.shape == self.ev.shape else 0.0
            self.trace_sink(self.windows, int(i), int(self.ev[i]), w, float(self.az[i]))
