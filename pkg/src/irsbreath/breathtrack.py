"""Breath waveform synthesis and recovery from a subcarrier phase series.

Pipeline: unwrap the packet-rate phase, decimate to a low rate, remove
drift with a high-pass, low-pass at 0.5 Hz and read the rate off a
Welch periodogram. All FIR stages are applied forward and backward, so
the filtered breath is not shifted in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal

from . import kernels
from .impairments import ImpairmentParams, QuantizerConfig, synthesize_csi_arrays
from .model import Scenario
from .series import PhaseSeries

DETECTION_THRESHOLD = 0.5
DEFAULT_BAND = (0.1, 0.5)
SEGMENT_KINDS = ("regular", "hold")


@dataclass(frozen=True)
class BreathSegment:
    kind: str
    duration: float
    rate: float = 0.0
    depth: float = 0.0

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"segment kind must be one of {SEGMENT_KINDS}, got {self.kind!r}")
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")
        if self.kind == "regular":
            if not 0.05 < self.rate < 2.0:
                raise ValueError(f"segment rate must be in (0.05, 2.0) Hz, got {self.rate}")
            if not 0.0 <= self.depth <= 0.05:
                raise ValueError(f"segment depth must be in [0, 0.05] m, got {self.depth}")


@dataclass(frozen=True)
class BreathPattern:
    segments: tuple[BreathSegment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("breath pattern needs at least one segment")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))

    def boundaries(self) -> list[tuple[float, float, BreathSegment]]:
        out, t = [], 0.0
        for seg in self.segments:
            out.append((t, t + seg.duration, seg))
            t += seg.duration
        return out

    @classmethod
    def regular(cls, duration: float, rate: float, depth: float) -> "BreathPattern":
        return cls((BreathSegment("regular", duration, rate, depth),))

    @classmethod
    def regular_hold_regular(cls, durations=(70.0, 40.0, 70.0), rate: float = 0.25,
                             depth: float = 0.02) -> "BreathPattern":
        a, b, c = durations
        return cls((BreathSegment("regular", a, rate, depth), BreathSegment("hold", b),
                    BreathSegment("regular", c, rate, depth)))


@dataclass
class DetectionResult:
    rate_hz: float
    waveform: PhaseSeries
    peak_to_trough_deg: float
    confidence: float
    valid: bool = True

    @property
    def detected(self) -> bool:
        return self.valid and self.confidence >= DETECTION_THRESHOLD


# ---------------------------------------------------------------------------
# synthesis


def synth_chest_displacement(p: BreathPattern, sample_rate_hz: float) -> PhaseSeries:
    """Chest displacement in meters.

    Regular segments follow ``depth * (1 - cos(theta)) / 2``. A segment
    starts at the phase that matches the displacement the previous one
    ended on, so the series has no jumps; holds keep that value.
    """
    if not sample_rate_hz > 0:
        raise ValueError(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    n = int(round(p.duration * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    x = np.zeros(n)
    v = 0.0
    for start, stop, seg in p.boundaries():
        sel = (t >= start) & (t < stop)
        if seg.kind == "hold" or seg.depth == 0.0:
            x[sel] = v if seg.kind == "hold" else 0.0
            v = v if seg.kind == "hold" else 0.0
            continue
        theta0 = math.acos(min(max(1.0 - 2.0 * v / seg.depth, -1.0), 1.0))
        w = 2 * math.pi * seg.rate
        x[sel] = seg.depth * (1.0 - np.cos(theta0 + w * (t[sel] - start))) / 2.0
        v = seg.depth * (1.0 - math.cos(theta0 + w * seg.duration)) / 2.0
    return PhaseSeries(sample_rate_hz, x)


# ---------------------------------------------------------------------------
# filtering


def unwrap_phase(s: PhaseSeries) -> PhaseSeries:
    return s.with_samples(kernels.unwrap(np.ascontiguousarray(s.samples)))


def design_lowpass(sample_rate_hz: float, cutoff_hz: float, transition_hz: float,
                   atten_db: float) -> np.ndarray:
    """Kaiser-windowed sinc with odd length and unit DC gain."""
    nyq = sample_rate_hz / 2.0
    if not 0 < cutoff_hz < nyq:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyq}) Hz")
    numtaps, beta = signal.kaiserord(atten_db, transition_hz / nyq)
    numtaps |= 1
    taps = signal.firwin(numtaps, cutoff_hz, window=("kaiser", beta), fs=sample_rate_hz)
    return taps / taps.sum()


def zero_phase_fir(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Forward-backward FIR filtering with odd reflection at both ends.

    Equivalent to convolving once with ``taps`` and once with the reversed
    taps, done here as a single FFT convolution.
    """
    x = np.asarray(x, dtype=np.float64)
    n = taps.shape[0]
    if x.shape[0] < n:
        raise ValueError(f"series of {x.shape[0]} samples is shorter than the {n}-tap filter")
    kernel = np.convolve(taps, taps[::-1])
    pad = min(kernel.shape[0] // 2, x.shape[0] - 1)
    left = 2 * x[0] - x[pad:0:-1]
    right = 2 * x[-1] - x[-2:-pad - 2:-1]
    xp = np.concatenate([left, x, right])
    y = signal.fftconvolve(xp, kernel, mode="same")
    return y[pad:pad + x.shape[0]]


def lowpass_filter(s: PhaseSeries, cutoff_hz: float, *, atten_db: float = 40.0) -> PhaseSeries:
    """Zero-phase low-pass; the -6 dB point of one pass sits at ``cutoff_hz``.

    The transition band spans 0.8 to 1.2 times the cutoff.
    """
    taps = design_lowpass(s.sample_rate_hz, cutoff_hz, 0.4 * cutoff_hz, atten_db)
    return s.with_samples(zero_phase_fir(s.samples, taps))


def highpass_detrend(s: PhaseSeries, cutoff_hz: float = 0.05, *,
                     atten_db: float = 30.0) -> PhaseSeries:
    """Remove DC and slow drift: the input minus its zero-phase low-pass.

    A symmetric kernel with unit DC gain reproduces straight lines exactly,
    so a linear ramp leaves no residual.
    """
    taps = design_lowpass(s.sample_rate_hz, cutoff_hz, cutoff_hz, atten_db)
    return s.with_samples(s.samples - zero_phase_fir(s.samples, taps))


def decimate(s: PhaseSeries, target_rate_hz: float, *, atten_db: float = 60.0) -> PhaseSeries:
    """Anti-alias (zero-phase) then keep every ``M``-th sample, ``M = round(fs / target)``."""
    factor = int(round(s.sample_rate_hz / target_rate_hz))
    if factor <= 1:
        return s
    new_rate = s.sample_rate_hz / factor
    taps = design_lowpass(s.sample_rate_hz, 0.4 * new_rate, 0.2 * new_rate, atten_db)
    y = zero_phase_fir(s.samples, taps)
    return PhaseSeries(new_rate, y[::factor], s.t0)


# ---------------------------------------------------------------------------
# rate estimation


def welch_spectrum(s: PhaseSeries, segment_s: float = 30.0, pad_factor: int = 8):
    """Hann-windowed Welch PSD with 50% overlap, zero-padded for a fine grid."""
    nper = min(len(s), int(round(segment_s * s.sample_rate_hz)))
    return signal.welch(s.samples, fs=s.sample_rate_hz, window="hann", nperseg=nper,
                        noverlap=nper // 2, nfft=pad_factor * nper, detrend="constant")


def estimate_breath_rate(s: PhaseSeries, band: Sequence[float] = DEFAULT_BAND, *,
                         segment_s: float = 30.0, edge_s: float | None = None) -> DetectionResult:
    """Spectral-peak breathing rate.

    ``confidence`` is the PSD mass within one Hann main lobe (``+-1/T``
    for segments of ``T`` seconds) around the peak divided by the PSD mass
    of the whole band. ``peak_to_trough_deg`` is measured on the band
    filtered waveform, ignoring ``edge_s`` seconds at both ends.
    """
    lo, hi = float(band[0]), float(band[1])
    if not 0 < lo < hi:
        raise ValueError(f"invalid band {band}")
    if s.duration < 3.0 / lo:
        raise ValueError(f"series of {s.duration:.3g} s is too short; need >= {3.0 / lo:.3g} s")
    if edge_s is None:
        edge_s = 1.0 / lo

    x = s.samples - s.samples.mean()
    waveform = s.with_samples(np.zeros_like(x))
    if np.ptp(x) > 0:
        waveform = lowpass_filter(highpass_detrend(s.with_samples(x), lo / 2.0), hi)
    edge = int(round(edge_s * s.sample_rate_hz))
    interior = waveform.samples[edge:len(waveform) - edge] if len(waveform) > 2 * edge else waveform.samples
    ptt = math.degrees(float(np.ptp(interior))) if interior.size else 0.0

    f, psd = welch_spectrum(s.with_samples(x), segment_s)
    inband = (f >= lo) & (f <= hi)
    total = float(psd[inband].sum())
    if not total > 0 or not np.isfinite(total):
        return DetectionResult(0.0, waveform, ptt, 0.0, valid=False)
    fb, pb = f[inband], psd[inband]
    rate = float(fb[np.argmax(pb)])
    seg_len = min(len(s), int(round(segment_s * s.sample_rate_hz))) / s.sample_rate_hz
    lobe = np.abs(fb - rate) <= 1.0 / seg_len
    conf = min(max(float(pb[lobe].sum()) / total, 0.0), 1.0)
    return DetectionResult(rate, waveform, ptt, conf, valid=True)


def normalize_ground_truth(s: PhaseSeries) -> PhaseSeries:
    lo, hi = float(s.samples.min()), float(s.samples.max())
    if hi == lo:
        raise ValueError("cannot normalize a constant series")
    y = (s.samples - lo) / (hi - lo)
    # pin the extrema exactly; rounding in the affine map can miss them by an ulp
    y[s.samples == lo] = 0.0
    y[s.samples == hi] = 1.0
    return s.with_samples(y)


# ---------------------------------------------------------------------------
# end to end


@dataclass
class PipelineStages:
    raw: PhaseSeries
    unwrapped: PhaseSeries
    filtered: PhaseSeries
    result: DetectionResult


def process_phase(raw: PhaseSeries, *, decimate_to: float = 10.0, highpass_hz: float = 0.05,
                  lowpass_hz: float = 0.5, band: Sequence[float] = DEFAULT_BAND) -> PipelineStages:
    """Wrapped subcarrier phase in, detection result and intermediate series out."""
    if len(raw) < 2:
        raise ValueError(f"need at least two phase samples, got {len(raw)}")
    if raw.duration < 3.0 / band[0]:
        raise ValueError(f"series of {raw.duration:.3g} s is too short; need >= {3.0 / band[0]:.3g} s")
    unwrapped = unwrap_phase(raw)
    low = decimate(unwrapped, decimate_to) if raw.sample_rate_hz > decimate_to else unwrapped
    filtered = lowpass_filter(highpass_detrend(low, highpass_hz), lowpass_hz)
    result = estimate_breath_rate(filtered, band)
    return PipelineStages(raw, unwrapped, filtered, result)


def track_breath(s: Scenario, state, pattern: BreathPattern, packet_rate_hz: float,
                 imp: ImpairmentParams | None, q: QuantizerConfig | None, subcarrier: int,
                 rng: np.random.Generator, **kw) -> DetectionResult:
    return track_breath_stages(s, state, pattern, packet_rate_hz, imp, q, subcarrier, rng,
                               **kw)[0].result


def track_breath_stages(s: Scenario, state, pattern: BreathPattern, packet_rate_hz: float,
                        imp: ImpairmentParams | None, q: QuantizerConfig | None,
                        subcarrier: int, rng: np.random.Generator, *,
                        quantize_first: bool = False):
    """Like :func:`track_breath` but also returns the stages and the chest series."""
    if not 0 <= subcarrier < s.n_subcarriers:
        raise IndexError(f"subcarrier {subcarrier} outside [0, {s.n_subcarriers})")
    chest = synth_chest_displacement(pattern, packet_rate_hz)
    csi = synthesize_csi_arrays(s, state, chest, packet_rate_hz, imp, q, rng,
                                quantize_first=quantize_first)
    return process_phase(csi.phase(subcarrier)), chest, csi
