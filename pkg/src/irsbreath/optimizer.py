"""Buffered, weighted-random greedy search over binary IRS states.

The search keeps the ``L`` best states seen so far together with their
measured self-interference (SI). Each iteration turns the buffer into a
per-element ON probability, draws a candidate from it, measures it and
swaps it in for the worst buffered state when it is strictly better.
Lower measurement values mean less SI.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator, Protocol, Sequence

import numpy as np

from . import kernels
from .model import as_state

WEIGHTINGS = ("linear", "uniform")


class SiMeasurement(Protocol):
    """Anything that maps an IRS state to a scalar SI level (lower is better)."""

    shape: tuple[int, int]

    def __call__(self, state: np.ndarray) -> float: ...


@dataclass
class GreedyConfig:
    buffer_len: int = 100
    patience: int = 500
    max_iterations: int | None = None
    weighting: str = "linear"
    rng_seed: int = 0
    remeasure_best: int = 0
    allow_duplicates: bool = False

    def __post_init__(self):
        if self.buffer_len < 1:
            raise ValueError(f"buffer_len must be >= 1, got {self.buffer_len}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.max_iterations is None:
            self.max_iterations = 10 * self.buffer_len * self.patience
        if self.max_iterations < self.buffer_len:
            raise ValueError(
                f"max_iterations ({self.max_iterations}) must cover the "
                f"{self.buffer_len} initialization measurements"
            )
        if self.remeasure_best < 0:
            raise ValueError("remeasure_best must be >= 0")


@dataclass
class OptimizerBuffers:
    """State buffer ``(L, n_rows, n_cols)`` and matching SI magnitudes ``(L,)``."""

    states: np.ndarray
    magnitudes: np.ndarray

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.uint8)
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if self.states.ndim != 3 or self.states.shape[0] != self.magnitudes.shape[0]:
            raise ValueError("states must be (L, rows, cols) with one magnitude per state")

    def __len__(self) -> int:
        return self.magnitudes.shape[0]

    def sort_descending(self) -> None:
        """Worst (largest SI) first, best last; ties keep their current order."""
        order = np.argsort(-self.magnitudes, kind="stable")
        self.states = self.states[order]
        self.magnitudes = self.magnitudes[order]

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.magnitudes) <= 0))

    def heatmap(self) -> np.ndarray:
        """ON ratio of every element over the buffered states, scaled so the maximum is 1."""
        mean = self.states.mean(axis=0)
        peak = mean.max()
        return mean / peak if peak > 0 else mean


@dataclass
class OptimizationTrace:
    """Every measurement of a run in order, plus the best state found."""

    measured: np.ndarray
    accepted: np.ndarray
    best_state: np.ndarray
    best_value: float
    n_init: int = 0
    buffers: OptimizerBuffers | None = None
    worst_in_buffer: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def cumulative_min(self) -> np.ndarray:
        return np.minimum.accumulate(self.measured)

    def __len__(self) -> int:
        return self.measured.shape[0]

    def records(self) -> Iterator[tuple[int, float, float, bool]]:
        cm = self.cumulative_min
        for i in range(len(self)):
            yield i, float(self.measured[i]), float(cm[i]), bool(self.accepted[i])


def _shape_of(m, shape) -> tuple[int, int]:
    if shape is None:
        shape = getattr(m, "shape", None)
    if shape is None:
        raise ValueError("surface shape unknown: pass shape= or give the measurement a .shape")
    return tuple(shape)


def _key(state: np.ndarray) -> bytes:
    return np.packbits(state.ravel()).tobytes()


def random_state(n_rows: int, n_cols: int, rng: np.random.Generator) -> np.ndarray:
    if n_rows < 1 or n_cols < 1:
        raise ValueError("surface dimensions must be >= 1")
    return rng.integers(0, 2, size=(n_rows, n_cols), dtype=np.uint8)


def initialize_buffers(cfg: GreedyConfig, m: SiMeasurement, rng: np.random.Generator,
                       shape: tuple[int, int] | None = None) -> OptimizerBuffers:
    n_rows, n_cols = _shape_of(m, shape)
    states = np.empty((cfg.buffer_len, n_rows, n_cols), dtype=np.uint8)
    mags = np.empty(cfg.buffer_len)
    for j in range(cfg.buffer_len):
        states[j] = random_state(n_rows, n_cols, rng)
        mags[j] = float(m(states[j]))
    return OptimizerBuffers(states, mags)


def linear_weights(n: int) -> np.ndarray:
    """Weights ``2 l / (L^2 + L)`` for ``l = 1..L``; they sum to one."""
    l = np.arange(1, n + 1, dtype=np.float64)
    return 2.0 * l / (n * n + n)


def compute_pnorm(buffers: OptimizerBuffers) -> np.ndarray:
    """Linearly weighted ON ratio; the best (last) state gets the largest weight."""
    if not buffers.is_sorted():
        raise ValueError("buffers must be sorted by descending SI before weighting")
    L = len(buffers)
    flat = buffers.states.reshape(L, -1)
    p = kernels.weighted_on_ratio(flat, linear_weights(L))
    return np.clip(p, 0.0, 1.0).reshape(buffers.states.shape[1:])


def uniform_on_ratio(buffers: OptimizerBuffers) -> np.ndarray:
    L = len(buffers)
    flat = buffers.states.reshape(L, -1)
    p = kernels.weighted_on_ratio(flat, np.full(L, 1.0 / L))
    return np.clip(p, 0.0, 1.0).reshape(buffers.states.shape[1:])


def sample_state_from_pnorm(pnorm: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = np.asarray(pnorm, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("ON probabilities must lie in [0, 1]")
    return (rng.random(p.shape) < p).astype(np.uint8)


def greedy_optimize(cfg: GreedyConfig, m: SiMeasurement, rng: np.random.Generator | None = None,
                    *, shape: tuple[int, int] | None = None) -> OptimizationTrace:
    """Run initialization and the optimization loop until ``patience`` is exceeded.

    ``max_iterations`` caps the total number of measurements, initialization
    included. The loop counter counts consecutive candidates that did not
    enter the buffer: either no better than the worst buffered state or,
    unless ``allow_duplicates``, already held in the buffer.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    shape = _shape_of(m, shape)
    buffers = initialize_buffers(cfg, m, rng, shape)

    measured = list(buffers.magnitudes)
    accepted = [True] * len(buffers)
    best_idx = int(np.argmin(buffers.magnitudes))
    best_state = buffers.states[best_idx].copy()
    best_value = float(buffers.magnitudes[best_idx])
    worst_hist = []

    weigh = compute_pnorm if cfg.weighting == "linear" else uniform_on_ratio
    # multiset of buffered states; a state already buffered is not a new state
    held = Counter(_key(st) for st in buffers.states)
    t_c = 0
    while len(measured) < cfg.max_iterations:
        buffers.sort_descending()
        worst_hist.append(buffers.magnitudes[0])
        candidate = sample_state_from_pnorm(weigh(buffers), rng)
        value = float(m(candidate))
        measured.append(value)
        key = _key(candidate)
        is_new = cfg.allow_duplicates or held[key] == 0
        if is_new and value < buffers.magnitudes[0]:
            old = _key(buffers.states[0])
            held[old] -= 1
            held[key] += 1
            buffers.states[0] = candidate
            buffers.magnitudes[0] = value
            accepted.append(True)
            t_c = 0
        else:
            accepted.append(False)
            t_c += 1
        if value < best_value:
            best_value = value
            best_state = candidate.copy()
        if t_c > cfg.patience:
            break

    buffers.sort_descending()
    if cfg.remeasure_best:
        best_state, best_value = _remeasure(buffers, m, cfg.remeasure_best)

    return OptimizationTrace(
        measured=np.asarray(measured),
        accepted=np.asarray(accepted, dtype=bool),
        best_state=best_state,
        best_value=best_value,
        n_init=cfg.buffer_len,
        buffers=buffers,
        worst_in_buffer=np.asarray(worst_hist),
    )


def _remeasure(buffers: OptimizerBuffers, m: SiMeasurement, repeats: int,
               n_candidates: int = 5) -> tuple[np.ndarray, float]:
    # noisy measurements bias the argmin; average a few repeats of the top entries
    top = range(len(buffers) - 1, max(-1, len(buffers) - 1 - n_candidates), -1)
    scored = []
    for j in top:
        vals = [float(m(buffers.states[j])) for _ in range(repeats)]
        scored.append((float(np.mean(vals)), j))
    value, j = min(scored)
    return buffers.states[j].copy(), value


def random_search(budget: int, m: SiMeasurement, rng: np.random.Generator,
                  *, shape: tuple[int, int] | None = None) -> OptimizationTrace:
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    n_rows, n_cols = _shape_of(m, shape)
    measured = np.empty(budget)
    best_state, best_value = None, math.inf
    for i in range(budget):
        s = random_state(n_rows, n_cols, rng)
        measured[i] = float(m(s))
        if measured[i] < best_value:
            best_value, best_state = measured[i], s
    return OptimizationTrace(
        measured=measured,
        accepted=np.zeros(budget, dtype=bool),
        best_state=best_state,
        best_value=float(best_value),
    )


def aggregate_traces(traces: Sequence[OptimizationTrace]) -> np.ndarray:
    """Per-iteration mean of cumulative minima; short traces hold their final value."""
    if len(traces) == 0:
        raise ValueError("need at least one trace to aggregate")
    curves = [t.cumulative_min for t in traces]
    n = max(len(c) for c in curves)
    padded = np.array([np.pad(c, (0, n - len(c)), mode="edge") for c in curves])
    return padded.mean(axis=0)


def iterations_to_threshold(curve: np.ndarray, threshold: float) -> float:
    """First iteration at which ``curve`` reaches ``threshold``; ``inf`` if never."""
    hits = np.flatnonzero(np.asarray(curve) <= threshold)
    return float(hits[0]) if hits.size else math.inf


def projection_correlation(heatmap: np.ndarray, pattern: np.ndarray,
                           n_thresholds: int = 360) -> tuple[float, float]:
    """Best Pearson correlation between ``heatmap`` and a binary projection of ``pattern``.

    Returns ``(r, threshold)`` maximizing ``r`` over evenly spaced thresholds.
    """
    from .model import binary_projection

    x = np.asarray(heatmap, dtype=np.float64).ravel()
    if np.ptp(x) == 0:
        return 0.0, 0.0
    best = (-math.inf, 0.0)
    for thr in np.linspace(0.0, 2 * math.pi, n_thresholds, endpoint=False):
        y = binary_projection(pattern, thr).ravel().astype(np.float64)
        if np.ptp(y) == 0:
            continue
        r = float(np.corrcoef(x, y)[0, 1])
        if r > best[0]:
            best = (r, float(thr))
    return best


class TableMeasurement:
    """Looks up SI values for states from a recorded table (replay or test stub)."""

    def __init__(self, table: dict[bytes, float], shape: tuple[int, int]):
        self.table = dict(table)
        self.shape = tuple(shape)
        self.calls = 0

    @staticmethod
    def key(state) -> bytes:
        return np.packbits(as_state(state).ravel()).tobytes()

    @classmethod
    def from_pairs(cls, pairs, shape):
        return cls({cls.key(s): float(v) for s, v in pairs}, shape)

    def __call__(self, state) -> float:
        self.calls += 1
        try:
            return self.table[self.key(state)]
        except KeyError:
            raise KeyError("state not present in the recorded measurement table") from None


class CallableMeasurement:
    """Wraps a plain function ``f(state) -> float`` and counts calls."""

    def __init__(self, func: Callable[[np.ndarray], float], shape: tuple[int, int]):
        self.func = func
        self.shape = tuple(shape)
        self.calls = 0

    def __call__(self, state) -> float:
        self.calls += 1
        return float(self.func(state))
