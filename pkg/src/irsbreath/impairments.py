"""Forward model of what a commodity WiFi receiver reports as CSI.

Phase errors (detection delay, sampling and carrier offsets, a constant
offset, LO jitter and slow drift) act on the phase only. AGC scales the
strongest component to a fixed fraction of full scale and the result is
rounded onto a signed ``bits``-wide grid; with strong SI this pushes the
weak breath component below one LSB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .model import Scenario, channel_matrix, as_state
from .series import PhaseSeries

METRIC_FLOOR_DB = -300.0


@dataclass(frozen=True)
class ImpairmentParams:
    """Phase impairment model.

    Parameters
    ----------
    pdd_slope, sfo_slope : float
        Linear phase slope across subcarriers in radians per subcarrier.
    cfo : float or None
        Per-packet carrier phase offset. ``None`` draws it uniformly from
        ``[0, 2*pi)`` for every packet; a number injects that offset.
        Forced to zero when synchronized.
    beta : float
        Constant system phase offset.
    jitter_std : float
        Std of the common-mode per-packet phase noise in radians.
    drift_rate : float
        Slow additive phase drift in radians per second.
    synchronized : bool
        Shared LO between transmitter and receiver: removes CFO, SFO and beta.
    awgn_std : float
        Optional complex Gaussian noise per real component, in channel units.
    """

    pdd_slope: float = 0.0
    sfo_slope: float = 0.0
    cfo: float | None = None
    beta: float = 0.0
    jitter_std: float = math.radians(15.0)
    drift_rate: float = 0.0
    synchronized: bool = True
    awgn_std: float = 0.0

    def __post_init__(self):
        if not self.jitter_std >= 0:
            raise ValueError(f"jitter_std must be >= 0, got {self.jitter_std}")
        if not self.awgn_std >= 0:
            raise ValueError(f"awgn_std must be >= 0, got {self.awgn_std}")
        for name in ("pdd_slope", "sfo_slope", "beta", "drift_rate"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def none(cls) -> "ImpairmentParams":
        """No impairment at all (the identity stage)."""
        return cls(jitter_std=0.0, synchronized=True)

    def effective(self) -> "ImpairmentParams":
        """The parameters actually applied (synchronization zeroes CFO, SFO and beta)."""
        if self.synchronized:
            return replace(self, sfo_slope=0.0, cfo=0.0, beta=0.0)
        return self

    def is_identity(self) -> bool:
        e = self.effective()
        return (e.pdd_slope == 0 and e.sfo_slope == 0 and e.cfo == 0 and e.beta == 0
                and e.jitter_std == 0 and e.drift_rate == 0)


@dataclass(frozen=True)
class QuantizerConfig:
    bits: int = 10
    agc_headroom: float = 0.9

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError(f"bits must be an integer >= 1, got {self.bits}")
        if not 0 < self.agc_headroom <= 1:
            raise ValueError(f"agc_headroom must be in (0, 1], got {self.agc_headroom}")

    @property
    def full_scale(self) -> int:
        return max(2 ** (self.bits - 1) - 1, 1)

    @property
    def target_peak(self) -> int:
        # integer target keeps re-quantization of a quantized snapshot exact
        return max(int(round(self.agc_headroom * self.full_scale)), 1)

    @property
    def code_range(self) -> tuple[int, int]:
        if self.bits == 1:
            return -1, 1
        return -(2 ** (self.bits - 1)), 2 ** (self.bits - 1) - 1


@dataclass(frozen=True)
class CsiSnapshot:
    """One reported CSI estimate.

    ``h`` holds the reported values; dividing by ``gain`` gives channel units.
    ``rssi_db`` is NaN until a receiver front end has measured it.
    """

    packet_index: int
    timestamp: float
    h: np.ndarray
    rssi_db: float = float("nan")
    gain: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.complex128)
        if h.ndim != 1:
            raise ValueError("h must be a vector of subcarrier values")
        object.__setattr__(self, "h", h)
        if not self.gain > 0:
            raise ValueError(f"gain must be > 0, got {self.gain}")

    @property
    def n_subcarriers(self) -> int:
        return self.h.shape[0]


# ---------------------------------------------------------------------------
# phase impairments


def impairment_phases(n_packets: int, n_subcarriers: int, timestamps, p: ImpairmentParams,
                      rng: np.random.Generator) -> np.ndarray:
    """Additive phase ``(n_packets, K)`` for a block of packets.

    Draw order per block: CFO for every packet (if random), then jitter.
    """
    e = p.effective()
    k = np.arange(n_subcarriers, dtype=np.float64)
    t = np.asarray(timestamps, dtype=np.float64).reshape(n_packets)
    common = np.full(n_packets, e.beta)
    if e.cfo is None:
        common = common + rng.uniform(0.0, 2 * math.pi, n_packets)
    else:
        common = common + e.cfo
    if e.drift_rate:
        common = common + e.drift_rate * t
    if e.jitter_std > 0:
        common = common + rng.normal(0.0, e.jitter_std, n_packets)
    return common[:, None] + (e.pdd_slope + e.sfo_slope) * k[None, :]


def _rotate(h: np.ndarray, phase: np.ndarray) -> np.ndarray:
    # exp(j*phase) built from cos/sin of an exact phase; magnitudes change by ~1 ulp at most
    return h * (np.cos(phase) + 1j * np.sin(phase))


def apply_phase_impairments(clean: CsiSnapshot, p: ImpairmentParams,
                            rng: np.random.Generator) -> CsiSnapshot:
    if not np.all(np.isfinite(clean.h)):
        raise ValueError("snapshot contains non-finite channel values")
    if p.is_identity():
        return replace(clean, h=clean.h.copy())
    ph = impairment_phases(1, clean.n_subcarriers, [clean.timestamp], p, rng)[0]
    return replace(clean, h=_rotate(clean.h, ph))


def impair_matrix(H: np.ndarray, timestamps, p: ImpairmentParams,
                  rng: np.random.Generator) -> np.ndarray:
    """Block version of :func:`apply_phase_impairments` for ``(N, K)`` arrays."""
    H = np.asarray(H, dtype=np.complex128)
    if p.is_identity():
        return H.copy()
    return _rotate(H, impairment_phases(H.shape[0], H.shape[1], timestamps, p, rng))


def add_awgn(H: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    if std == 0:
        return H
    return H + std * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape))


# ---------------------------------------------------------------------------
# AGC, quantization and the amplitude metric


def _rssi_db(power: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.round(10.0 * np.log10(power))


def quantize_matrix(H: np.ndarray, q: QuantizerConfig, gains_in=None):
    """AGC and quantize every row of ``H``.

    Parameters
    ----------
    H : (N, K) complex array of reported values.
    gains_in : optional (N,) gains already applied to ``H``.

    Returns
    -------
    codes : (N, K) complex array of integer-valued components.
    gains : (N,) total gain from channel units to codes.
    rssi_db : (N,) RSSI of the channel before any gain, in 1 dB steps.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.complex128))
    n = H.shape[0]
    g_in = np.ones(n) if gains_in is None else np.asarray(gains_in, dtype=np.float64).reshape(n)
    phys = H / g_in[:, None]
    peak = np.maximum(np.abs(phys.real), np.abs(phys.imag)).max(axis=1)
    if np.any(peak == 0):
        raise ValueError("AGC undefined for an all-zero CSI snapshot")
    gains = q.target_peak / peak
    lo, hi = q.code_range
    scaled = phys * gains[:, None]
    codes = np.clip(np.rint(scaled.real), lo, hi) + 1j * np.clip(np.rint(scaled.imag), lo, hi)
    rssi = _rssi_db(np.mean(np.abs(phys) ** 2, axis=1))
    return codes, gains, rssi


def apply_agc_and_quantize(s: CsiSnapshot, q: QuantizerConfig) -> CsiSnapshot:
    codes, gains, rssi = quantize_matrix(s.h[None, :], q, [s.gain])
    return replace(s, h=codes[0], gain=float(gains[0]), rssi_db=float(rssi[0]))


def scaled_amplitude_metric(s: CsiSnapshot, reference: str = "gain",
                            floor_db: float = METRIC_FLOOR_DB) -> float:
    """Mean subcarrier amplitude in dB after undoing the receiver scaling.

    ``reference="gain"`` divides by the recorded AGC gain. ``reference="rssi"``
    rescales the reported amplitudes so their power matches the coarse RSSI,
    which is what a host without access to the gain can do.
    """
    mag = np.abs(s.h)
    mean = float(mag.mean())
    if mean == 0.0:
        return floor_db
    if reference == "gain":
        amp = mean / s.gain
    elif reference == "rssi":
        if not math.isfinite(s.rssi_db):
            raise ValueError("snapshot has no RSSI; quantize it first or use reference='gain'")
        amp = mean * math.sqrt(10.0 ** (s.rssi_db / 10.0) / float(np.mean(mag ** 2)))
    else:
        raise ValueError(f"unknown reference {reference!r}")
    return max(20.0 * math.log10(amp), floor_db)


# ---------------------------------------------------------------------------
# stream synthesis


@dataclass
class CsiArrays:
    """A synthesized stream held as arrays; ``snapshots()`` yields it record by record."""

    timestamps: np.ndarray
    h: np.ndarray
    rssi_db: np.ndarray
    gains: np.ndarray

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    def snapshots(self) -> Iterator[CsiSnapshot]:
        for i in range(len(self)):
            yield CsiSnapshot(i, float(self.timestamps[i]), self.h[i],
                              float(self.rssi_db[i]), float(self.gains[i]))

    def phase(self, subcarrier: int) -> PhaseSeries:
        """Wrapped phase of one subcarrier as a series at the packet rate."""
        return phase_series(self.timestamps, np.angle(self.h[:, subcarrier]))


def phase_series(timestamps, phase) -> PhaseSeries:
    """Series from per-packet timestamps; the rate is the mean packet rate."""
    t = np.asarray(timestamps, dtype=np.float64)
    if t.shape[0] < 2:
        rate = 1.0
    else:
        span = float(t[-1] - t[0])
        if not span > 0:
            raise ValueError("timestamps must span a positive interval")
        rate = (t.shape[0] - 1) / span
    t0 = float(t[0]) if t.shape[0] else 0.0
    return PhaseSeries(rate, phase, t0)


def packet_times(chest: PhaseSeries, packet_rate_hz: float) -> np.ndarray:
    n = int(round(chest.duration * packet_rate_hz))
    return chest.t0 + np.arange(n) / packet_rate_hz


def synthesize_csi_arrays(s: Scenario, state, chest: PhaseSeries, packet_rate_hz: float,
                          p: ImpairmentParams | None, q: QuantizerConfig | None,
                          rng: np.random.Generator, *, quantize_first: bool = False,
                          chunk: int = 8192) -> CsiArrays:
    """Simulate the CSI a receiver reports while the chest moves.

    ``chest`` is a displacement series in meters; the reflected path changes
    by twice that. ``p=None`` or ``q=None`` skips the respective stage.

    With ``quantize_first`` the channel is AGC-scaled and quantized before
    the phase errors are applied. LO jitter and offsets then rotate the
    already-quantized estimate, the way a receiver's digital correction
    stages see it. Otherwise the order is phase errors, then quantization.
    """
    if not packet_rate_hz > 0:
        raise ValueError(f"packet_rate_hz must be > 0, got {packet_rate_hz}")
    state = as_state(state, s.irs)
    t = packet_times(chest, packet_rate_hz)
    disp = np.interp(t, chest.times, chest.samples)
    n, K = t.shape[0], s.n_subcarriers
    H = np.empty((n, K), dtype=np.complex128)
    gains = np.ones(n)
    rssi = np.full(n, np.nan)
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        block = channel_matrix(s, state, 2.0 * disp[a:b])
        if p is not None and p.awgn_std > 0:
            block = add_awgn(block, p.awgn_std, rng)
        if p is not None and not quantize_first:
            block = impair_matrix(block, t[a:b], p, rng)
        if q is not None:
            block, gains[a:b], rssi[a:b] = quantize_matrix(block, q)
        if p is not None and quantize_first:
            block = impair_matrix(block, t[a:b], p, rng)
        H[a:b] = block
    return CsiArrays(t, H, rssi, gains)


def synthesize_csi_stream(s: Scenario, state, chest: PhaseSeries, packet_rate_hz: float,
                          p: ImpairmentParams | None, q: QuantizerConfig | None,
                          rng: np.random.Generator, **kw) -> Iterator[CsiSnapshot]:
    """Generator form of :func:`synthesize_csi_arrays`."""
    yield from synthesize_csi_arrays(s, state, chest, packet_rate_hz, p, q, rng, **kw).snapshots()


class SimulatedMeasurement:
    """SI measurement of the simulated receiver: one CSI snapshot per state.

    The breath path is excluded by default (the surface is tuned while the
    subject is absent or still). ``noise`` adds phase impairments, which do
    not change the amplitude metric, and ``awgn_std`` adds amplitude noise.
    """

    def __init__(self, s: Scenario, q: QuantizerConfig | None = None,
                 p: ImpairmentParams | None = None, rng: np.random.Generator | None = None,
                 reference: str = "gain", include_breath: bool = False):
        self.scenario = s
        self.q = q
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.reference = reference
        self.include_breath = include_breath
        self.shape = s.irs.shape
        self.calls = 0

    def snapshot(self, state) -> CsiSnapshot:
        from .model import channel_vector

        h = channel_vector(self.scenario, state, 0.0, include_breath=self.include_breath)
        if self.p is not None and self.p.awgn_std > 0:
            h = add_awgn(h, self.p.awgn_std, self.rng)
        snap = CsiSnapshot(self.calls, float(self.calls), h)
        if self.q is not None:
            snap = apply_agc_and_quantize(snap, self.q)
        if self.p is not None:
            snap = apply_phase_impairments(snap, self.p, self.rng)
        return snap

    def __call__(self, state) -> float:
        snap = self.snapshot(state)
        self.calls += 1
        return scaled_amplitude_metric(snap, self.reference)


# ---------------------------------------------------------------------------
# circular statistics


def resultant_length(angles) -> float:
    """Mean resultant length of unit phasors; 1 for identical angles, ~0 for uniform."""
    a = np.asarray(angles, dtype=np.float64)
    return float(np.abs(np.mean(np.exp(1j * a))))


def circular_mean(angles) -> float:
    a = np.asarray(angles, dtype=np.float64)
    return float(np.angle(np.mean(np.exp(1j * a))))


def circular_variance(angles) -> float:
    return 1.0 - resultant_length(angles)


def circular_std(angles) -> float:
    r = resultant_length(angles)
    return math.inf if r == 0 else math.sqrt(-2.0 * math.log(r))


def angular_deviation(angles, center: float | None = None) -> np.ndarray:
    """Signed deviation of each angle from ``center`` (default: circular mean), in (-pi, pi]."""
    a = np.asarray(angles, dtype=np.float64)
    c = circular_mean(a) if center is None else center
    return np.angle(np.exp(1j * (a - c)))


def fraction_within(angles, half_width: float) -> float:
    """Fraction of angles within ``half_width`` radians of their circular mean."""
    return float(np.mean(np.abs(angular_deviation(angles)) <= half_width))
