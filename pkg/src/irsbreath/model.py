"""Complex-baseband channel of a colocated WiFi transceiver facing a binary IRS.

The received CSI on one subcarrier is the sum of four path groups: static
reflections, the chest reflection, the IRS element reflections and the
self-interference leaking directly from transmitter to receiver. All
operations here are pure functions of immutable inputs.

An IRS state is a 2-D ``uint8`` array of shape ``(n_rows, n_cols)``; row 0 is
the top edge of the surface and column 0 the left edge as seen from the
antennas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import kernels

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * math.pi


def _require_finite(name: str, value) -> None:
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class BreathPathParams:
    """Chest reflection: complex attenuation ``a0``, fixed length ``d0`` [m], wavelength [m]."""

    a0: complex
    d0: float
    wavelength: float

    def __post_init__(self):
        _require_finite("a0", self.a0)
        _require_finite("d0", self.d0)
        _require_finite("wavelength", self.wavelength)
        if self.d0 < 0:
            raise ValueError(f"d0 must be >= 0, got {self.d0}")
        if self.wavelength <= 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")


@dataclass(frozen=True)
class StaticPath:
    a: complex
    d: float

    def __post_init__(self):
        _require_finite("a", self.a)
        _require_finite("d", self.d)
        if self.d < 0:
            raise ValueError(f"static path d must be >= 0, got {self.d}")


@dataclass(frozen=True)
class IrsGeometry:
    """Planar binary surface of ``n_rows x n_cols`` identical elements.

    ``phase_shift`` is the extra reflection phase of an element in the ON
    state and ``element_reflectance`` scales every element amplitude (it
    absorbs element efficiency and the antenna gains towards the surface).
    """

    n_rows: int = 16
    n_cols: int = 16
    width: float = 0.4
    height: float = 0.32
    phase_shift: float = math.pi
    element_reflectance: float = 1.0

    def __post_init__(self):
        if int(self.n_rows) != self.n_rows or int(self.n_cols) != self.n_cols:
            raise ValueError("n_rows and n_cols must be integers")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError(f"IRS needs at least one element, got {self.n_rows}x{self.n_cols}")
        for name in ("width", "height", "phase_shift", "element_reflectance"):
            _require_finite(name, getattr(self, name))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be > 0")
        if not 0 < self.phase_shift <= TWO_PI:
            raise ValueError(f"phase_shift must lie in (0, 2*pi], got {self.phase_shift}")
        if self.element_reflectance < 0:
            raise ValueError("element_reflectance must be >= 0")

    @property
    def n_elements(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def element_area(self) -> float:
        return (self.width / self.n_cols) * (self.height / self.n_rows)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class SelfInterferenceParams:
    """Direct TX-to-RX leakage: attenuation ``a_iso`` and phase ``theta`` in cycles."""

    a_iso: complex
    theta: float

    def __post_init__(self):
        _require_finite("a_iso", self.a_iso)
        _require_finite("theta", self.theta)


@dataclass(frozen=True)
class Scenario:
    """Room, antenna, surface and subject description, all in SI units.

    ``antenna_offset`` is the (horizontal, vertical) position in meters of the
    antenna pair projected onto the surface plane, relative to the surface
    center; vertical is positive towards the top edge. ``round_trip_phase``
    switches the element path length from the one-way distance to twice it.
    """

    irs: IrsGeometry
    antenna_distance: float
    antenna_offset: tuple[float, float] = (0.0, 0.0)
    static_paths: tuple[StaticPath, ...] = ()
    breath_path: BreathPathParams | None = None
    si: SelfInterferenceParams = SelfInterferenceParams(0j, 0.0)
    carrier_hz: float = 5.32e9
    subcarrier_spacing_hz: float = 312.5e3
    n_subcarriers: int = 56
    round_trip_phase: bool = False

    def __post_init__(self):
        _require_finite("antenna_distance", self.antenna_distance)
        if self.antenna_distance <= 0:
            raise ValueError(f"antenna_distance must be > 0, got {self.antenna_distance}")
        if len(self.antenna_offset) != 2:
            raise ValueError("antenna_offset must be a (horizontal, vertical) pair")
        _require_finite("antenna_offset", self.antenna_offset)
        object.__setattr__(self, "antenna_offset", tuple(float(v) for v in self.antenna_offset))
        object.__setattr__(self, "static_paths", tuple(self.static_paths))
        _require_finite("carrier_hz", self.carrier_hz)
        _require_finite("subcarrier_spacing_hz", self.subcarrier_spacing_hz)
        if self.carrier_hz <= 0:
            raise ValueError(f"carrier_hz must be > 0, got {self.carrier_hz}")
        if self.subcarrier_spacing_hz < 0:
            raise ValueError("subcarrier_spacing_hz must be >= 0")
        if int(self.n_subcarriers) != self.n_subcarriers or self.n_subcarriers < 1:
            raise ValueError(f"n_subcarriers must be an integer >= 1, got {self.n_subcarriers}")
        lowest = self.carrier_hz - (self.n_subcarriers - 1) / 2 * self.subcarrier_spacing_hz
        if lowest <= 0:
            raise ValueError("subcarrier band extends below 0 Hz")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


@dataclass(frozen=True)
class PowerBudget:
    """Link-budget terms: powers in dBm, isolation in dB."""

    p_tx: float
    alpha_iso: float
    p_static: float
    p_irs: float

    def __post_init__(self):
        for name in ("p_tx", "alpha_iso", "p_static", "p_irs"):
            _require_finite(name, getattr(self, name))

    @property
    def p_res(self) -> float:
        return residual_si_power(self)


# --------------------------------------------------------------------------
# path components


def eval_breath_path(p: BreathPathParams, d_t: float) -> complex:
    """Chest reflection for an instantaneous path-length change ``d_t`` [m]."""
    _require_finite("d_t", d_t)
    return complex(p.a0 * np.exp(-1j * TWO_PI * (p.d0 + d_t) / p.wavelength))


def _path_terms(amps, lengths, wavelength) -> np.ndarray:
    amps = np.asarray(amps, dtype=np.complex128)
    lengths = np.asarray(lengths, dtype=np.float64)
    return amps * np.exp(-1j * TWO_PI * lengths / wavelength)


def eval_static_paths(paths: Sequence[StaticPath], wavelength: float) -> complex:
    if wavelength <= 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    if len(paths) == 0:
        return 0j
    terms = _path_terms([p.a for p in paths], [p.d for p in paths], wavelength)
    return complex(np.sum(terms))


def as_state(state, geom: IrsGeometry | None = None) -> np.ndarray:
    """Validate ``state`` as a binary matrix (matching ``geom`` if given)."""
    arr = np.asarray(state)
    if arr.ndim != 2:
        raise ValueError(f"IRS state must be 2-D, got shape {arr.shape}")
    if geom is not None and arr.shape != geom.shape:
        raise ValueError(f"IRS state shape {arr.shape} does not match surface {geom.shape}")
    if arr.dtype != np.uint8:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("IRS state entries must be 0 or 1")
        arr = arr.astype(np.uint8)
    elif arr.size and arr.max() > 1:
        raise ValueError("IRS state entries must be 0 or 1")
    return np.ascontiguousarray(arr)


def eval_irs_paths(geom: IrsGeometry, state, element_amps, element_lengths, wavelength: float) -> complex:
    """Sum of element reflections ``a_i exp(-j 2 pi d_i / lambda) exp(j s_i phi)``."""
    bits = as_state(state, geom).ravel()
    amps = np.asarray(element_amps, dtype=np.complex128).ravel()
    lengths = np.asarray(element_lengths, dtype=np.float64).ravel()
    if amps.size != geom.n_elements or lengths.size != geom.n_elements:
        raise ValueError(
            f"expected {geom.n_elements} element amplitudes and lengths, "
            f"got {amps.size} and {lengths.size}"
        )
    if wavelength <= 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    terms = _path_terms(amps, lengths, wavelength) * np.exp(1j * bits * geom.phase_shift)
    return complex(np.sum(terms))


def eval_self_interference(p: SelfInterferenceParams) -> complex:
    return complex(p.a_iso * np.exp(-1j * TWO_PI * p.theta))


# --------------------------------------------------------------------------
# surface geometry


def far_field_radius(longest_dimension: float, wavelength: float) -> float:
    if wavelength <= 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    return 2.0 * longest_dimension**2 / wavelength


def element_path_length(d, d_h, d_v, geom: IrsGeometry):
    """Antenna-to-element distance for element offsets ``d_h``/``d_v`` in element units.

    The horizontal step is ``width / n_cols`` and the vertical step
    ``height / n_rows``. Accepts scalars or broadcastable arrays.
    """
    if np.any(np.asarray(d) <= 0):
        raise ValueError("antenna distance must be > 0")
    d1 = np.sqrt(np.square(d) + np.square(np.asarray(d_h) * (geom.width / geom.n_cols)))
    d2 = np.sqrt(np.square(d1) + np.square(np.asarray(d_v) * (geom.height / geom.n_rows)))
    return float(d2) if np.ndim(d2) == 0 else d2


def element_offsets(s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical element offsets from the antenna projection, in element units."""
    g = s.irs
    col = np.arange(g.n_cols) - (g.n_cols - 1) / 2.0
    row = (g.n_rows - 1) / 2.0 - np.arange(g.n_rows)
    off_h, off_v = s.antenna_offset
    d_h = col - off_h * g.n_cols / g.width
    d_v = row - off_v * g.n_rows / g.height
    return np.broadcast_to(d_h, g.shape).copy(), np.broadcast_to(d_v[:, None], g.shape).copy()


def element_distances(s: Scenario) -> np.ndarray:
    d_h, d_v = element_offsets(s)
    return element_path_length(s.antenna_distance, d_h, d_v, s.irs)


def element_path_lengths(s: Scenario) -> np.ndarray:
    """Path length entering each element's phase term (one-way or round trip)."""
    d2 = element_distances(s)
    return 2.0 * d2 if s.round_trip_phase else d2


def element_amplitudes(s: Scenario) -> np.ndarray:
    """Element amplitudes from two-way spreading times the element aperture gain.

    ``(lambda / (4 pi d))**2 * (4 pi A / lambda**2)`` reduces to
    ``A / (4 pi d**2)``, independent of frequency.
    """
    d2 = element_distances(s)
    return s.irs.element_reflectance * s.irs.element_area / (4.0 * math.pi * d2**2)


def element_phase(d2, wavelength: float):
    """Wrapped phase ``2 pi / lambda * (d2 mod lambda)`` in ``[0, 2 pi)``."""
    if wavelength <= 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    phase = (TWO_PI / wavelength) * np.mod(d2, wavelength)
    phase = np.where(phase >= TWO_PI, phase - TWO_PI, phase)
    return float(phase) if np.ndim(phase) == 0 else phase


def phase_pattern(s: Scenario) -> np.ndarray:
    """Per-element wrapped phase across the surface at the carrier wavelength."""
    return element_phase(element_path_lengths(s), s.wavelength)


def binary_projection(pattern, threshold_phase: float = 0.0) -> np.ndarray:
    """Switch ON every element whose wrapped phase is in ``[threshold, threshold + pi)``."""
    rel = np.mod(np.asarray(pattern, dtype=np.float64) - threshold_phase, TWO_PI)
    return (rel < math.pi).astype(np.uint8)


def residual_si_power(b: PowerBudget) -> float:
    """Residual SI power [dBm] from the link-budget sum, taken verbatim in dB."""
    return b.p_tx - b.alpha_iso + b.p_static - b.p_irs


# --------------------------------------------------------------------------
# full channel


def subcarrier_frequencies(s: Scenario) -> np.ndarray:
    k = np.arange(s.n_subcarriers)
    return s.carrier_hz + (k - (s.n_subcarriers - 1) / 2.0) * s.subcarrier_spacing_hz


def subcarrier_wavelengths(s: Scenario) -> np.ndarray:
    return SPEED_OF_LIGHT / subcarrier_frequencies(s)


def eval_total_channel(s: Scenario, state, d_t: float, subcarrier_index: int) -> complex:
    """Reference evaluation of one subcarrier as the sum of the four path groups."""
    if not 0 <= subcarrier_index < s.n_subcarriers:
        raise IndexError(f"subcarrier index {subcarrier_index} outside [0, {s.n_subcarriers})")
    lam = float(subcarrier_wavelengths(s)[subcarrier_index])
    y_s = eval_static_paths(s.static_paths, lam)
    y_d = 0j
    if s.breath_path is not None:
        y_d = eval_breath_path(replace(s.breath_path, wavelength=lam), d_t)
    y_irs = eval_irs_paths(s.irs, state, element_amplitudes(s), element_path_lengths(s), lam)
    y_si = eval_self_interference(s.si)
    return y_s + y_d + y_irs + y_si


@dataclass(frozen=True)
class ChannelTables:
    """Precomputed per-subcarrier terms for fast repeated channel evaluation."""

    wavelengths: np.ndarray
    fixed: np.ndarray
    breath: np.ndarray
    irs_coeffs: np.ndarray
    switch_factor: complex


@lru_cache(maxsize=64)
def channel_tables(s: Scenario) -> ChannelTables:
    lam = subcarrier_wavelengths(s)
    fixed = np.full(s.n_subcarriers, eval_self_interference(s.si), dtype=np.complex128)
    if s.static_paths:
        a = np.array([p.a for p in s.static_paths], dtype=np.complex128)
        d = np.array([p.d for p in s.static_paths])
        fixed = fixed + (a[None, :] * np.exp(-1j * TWO_PI * d[None, :] / lam[:, None])).sum(axis=1)
    if s.breath_path is not None:
        breath = s.breath_path.a0 * np.exp(-1j * TWO_PI * s.breath_path.d0 / lam)
    else:
        breath = np.zeros(s.n_subcarriers, dtype=np.complex128)
    amps = element_amplitudes(s).ravel()
    lengths = element_path_lengths(s).ravel()
    coeffs = amps[None, :] * np.exp(-1j * TWO_PI * lengths[None, :] / lam[:, None])
    for arr in (lam, fixed, breath, coeffs):
        arr.setflags(write=False)
    return ChannelTables(
        wavelengths=lam,
        fixed=fixed,
        breath=np.asarray(breath, dtype=np.complex128),
        irs_coeffs=np.ascontiguousarray(coeffs),
        switch_factor=complex(np.exp(1j * s.irs.phase_shift)),
    )


def irs_vector(s: Scenario, state) -> np.ndarray:
    """IRS contribution on all subcarriers for one state."""
    t = channel_tables(s)
    bits = as_state(state, s.irs).ravel()
    return kernels.irs_response(t.irs_coeffs, bits, t.switch_factor)


def static_vector(s: Scenario, state) -> np.ndarray:
    """Every time-invariant component (static paths, SI, IRS) on all subcarriers."""
    return channel_tables(s).fixed + irs_vector(s, state)


def channel_vector(s: Scenario, state, d_t: float = 0.0, include_breath: bool = True) -> np.ndarray:
    """Total channel on all subcarriers; equals ``eval_total_channel`` for every index."""
    y = static_vector(s, state)
    if include_breath:
        t = channel_tables(s)
        y = y + t.breath * np.exp(-1j * TWO_PI * d_t / t.wavelengths)
    return y


def channel_matrix(s: Scenario, state, d_series) -> np.ndarray:
    """Channel for a sequence of path-length changes, shape ``(len(d_series), K)``."""
    t = channel_tables(s)
    d = np.asarray(d_series, dtype=np.float64)
    base = static_vector(s, state)
    return base[None, :] + t.breath[None, :] * np.exp(-1j * TWO_PI * d[:, None] / t.wavelengths[None, :])
