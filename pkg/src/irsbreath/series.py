from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhaseSeries:
    """Uniformly sampled real series (phase in radians or displacement in meters)."""

    sample_rate_hz: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.sample_rate_hz

    def with_samples(self, samples) -> "PhaseSeries":
        return PhaseSeries(self.sample_rate_hz, samples, self.t0)

    def window(self, start_s: float, stop_s: float) -> np.ndarray:
        t = self.times
        return self.samples[(t >= start_s) & (t < stop_s)]
