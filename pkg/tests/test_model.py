import cmath
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from irsbreath.model import (BreathPathParams, IrsGeometry, PowerBudget, Scenario,
                             SelfInterferenceParams, StaticPath, binary_projection,
                             channel_matrix, channel_vector, element_amplitudes,
                             element_distances, element_path_length, element_path_lengths,
                             element_phase, eval_breath_path, eval_irs_paths,
                             eval_self_interference, eval_static_paths, eval_total_channel,
                             far_field_radius, phase_pattern, residual_si_power,
                             subcarrier_frequencies)


def rel_close(a, b, rtol=1e-12):
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


# --- breath path -------------------------------------------------------------

def test_breath_zero_path_is_unit():
    assert eval_breath_path(BreathPathParams(1 + 0j, 0.0, 0.06), 0.0) == 1 + 0j


def test_breath_half_wavelength_flips_sign():
    z = eval_breath_path(BreathPathParams(1 + 0j, 0.03, 0.06), 0.0)
    assert abs(z - (-1)) < 1e-15


def test_breath_frozen_value():
    # 40-digit evaluation of 0.5 exp(-j 2 pi 1.004 / 0.0557)
    z = eval_breath_path(BreathPathParams(0.5 + 0j, 1.0, 0.0557), 0.004)
    assert rel_close(z, complex(0.49377781941507702445, -0.078635011627719513702))


def test_breath_rejects_non_finite():
    with pytest.raises(ValueError):
        eval_breath_path(BreathPathParams(1, 0.0, 0.06), math.nan)
    with pytest.raises(ValueError):
        BreathPathParams(complex(math.inf, 0), 0.0, 0.06)


@pytest.mark.parametrize("depth, expected_deg", [(0.030, 360.0), (0.003, 36.0)])
def test_breath_phase_swing(depth, expected_deg):
    # chest moves 0..depth, the reflected path changes by twice that
    p = BreathPathParams(1 + 0j, 0.0, 0.06)
    d = np.linspace(0.0, 2 * depth, 20001)
    ph = np.unwrap([cmath.phase(eval_breath_path(p, x)) for x in d])
    assert abs(math.degrees(np.ptp(ph)) - expected_deg) < 0.1


# --- static paths ------------------------------------------------------------

def test_static_empty():
    assert eval_static_paths([], 0.06) == 0j


def test_static_half_wave_pair_cancels():
    z = eval_static_paths([StaticPath(1, 0.0), StaticPath(1, 0.03)], 0.06)
    assert abs(z) < 1e-15


def test_static_matches_termwise_oracle(rng):
    for _ in range(20):
        paths = [StaticPath(complex(*rng.normal(size=2)), rng.uniform(0, 10)) for _ in range(5)]
        ref = oracles.static([(p.a, p.d) for p in paths], 0.0557)
        assert rel_close(eval_static_paths(paths, 0.0557), ref, 1e-11)


# --- IRS paths ---------------------------------------------------------------

def _random_irs(rng, n_rows=4, n_cols=4):
    g = IrsGeometry(n_rows, n_cols, 0.1, 0.1, phase_shift=rng.uniform(0.1, 2 * math.pi))
    amps = rng.normal(size=g.n_elements) + 1j * rng.normal(size=g.n_elements)
    lengths = rng.uniform(0.5, 3.0, g.n_elements)
    bits = rng.integers(0, 2, g.shape, dtype=np.uint8)
    return g, amps, lengths, bits


def test_irs_all_off_equals_static_sum(rng):
    g, amps, lengths, _ = _random_irs(rng)
    off = np.zeros(g.shape, np.uint8)
    paths = [StaticPath(a, d) for a, d in zip(amps, lengths)]
    assert eval_irs_paths(g, off, amps, lengths, 0.06) == eval_static_paths(paths, 0.06)


def test_irs_single_element_flip():
    g = IrsGeometry(1, 1, 0.01, 0.01, phase_shift=math.pi)
    z = eval_irs_paths(g, [[1]], [1.0], [0.0], 0.06)
    assert abs(z - (-1)) < 1e-15


def test_irs_matches_per_element_oracle(rng):
    for _ in range(20):
        g, amps, lengths, bits = _random_irs(rng)
        ref = oracles.irs(amps, lengths, bits.ravel(), g.phase_shift, 0.0557)
        assert rel_close(eval_irs_paths(g, bits, amps, lengths, 0.0557), ref, 1e-11)


def test_irs_dimension_mismatch():
    g = IrsGeometry(2, 2, 0.1, 0.1)
    with pytest.raises(ValueError):
        eval_irs_paths(g, np.zeros((2, 2)), [1, 1, 1], [0, 0, 0, 0], 0.06)
    with pytest.raises(ValueError):
        eval_irs_paths(g, np.zeros((2, 3)), [1] * 4, [0] * 4, 0.06)


def test_irs_single_bit_flip_delta(rng):
    g, amps, lengths, bits = _random_irs(rng)
    lam = 0.0557
    base = eval_irs_paths(g, bits, amps, lengths, lam)
    for i in range(g.n_elements):
        b = bits.copy().ravel()
        b[i] ^= 1
        after = eval_irs_paths(g, b.reshape(g.shape), amps, lengths, lam)
        term = amps[i] * cmath.exp(-2j * math.pi * lengths[i] / lam) * (cmath.exp(1j * g.phase_shift) - 1)
        # switching ON adds the term, switching OFF removes it again
        expected = term if b[i] else -term
        assert abs((after - base) - expected) < 1e-12


# --- self-interference -------------------------------------------------------

@pytest.mark.parametrize("theta, expected", [(0.0, 1 + 0j), (0.5, -1 + 0j)])
def test_si_trivial(theta, expected):
    assert abs(eval_self_interference(SelfInterferenceParams(1, theta)) - expected) < 1e-15


def test_si_frozen_value():
    z = eval_self_interference(SelfInterferenceParams(0.01, 0.137))
    assert rel_close(z, complex(0.0065183372530087876122, -0.0075836191528872184492))


# --- far field / geometry ----------------------------------------------------

def test_far_field_values():
    assert abs(far_field_radius(0.4, 0.06) - 5.333) < 0.01
    assert far_field_radius(0.0, 0.06) == 0.0
    assert rel_close(far_field_radius(0.512, 0.0557), 9.412710951526032316)


@given(st.just(0.0) | st.floats(1e-6, 10.0), st.floats(1e-3, 1.0))
def test_far_field_quadratic(D, lam):
    assert far_field_radius(2 * D, lam) == 4 * far_field_radius(D, lam)
    assert far_field_radius(D * 1.5, lam) >= far_field_radius(D, lam)


def test_element_path_length_values():
    g = IrsGeometry(16, 16, 0.4, 0.32)
    assert element_path_length(1.0, 0, 0, g) == 1.0
    assert rel_close(element_path_length(1.0, 8, 0, g), 1.019803902718556966)


@given(st.floats(0.1, 5), st.floats(-20, 20), st.floats(-20, 20))
def test_element_path_length_even(d, dh, dv):
    g = IrsGeometry(16, 16, 0.4, 0.32)
    assert element_path_length(d, dh, dv, g) == element_path_length(d, -dh, -dv, g)


def test_element_phase_values():
    lam = 0.06
    # 3 * 0.06 is not exactly representable, so the result may sit just below 2 pi
    assert abs(math.remainder(element_phase(3 * lam, lam), 2 * math.pi)) < 1e-12
    assert element_phase(0.75, 0.25) == 0.0
    assert element_phase(lam / 2, lam) == pytest.approx(math.pi, abs=1e-12)
    # 40-digit modulo reference
    assert element_phase(1.0, 0.05567) == pytest.approx(6.0506837491988078144, rel=1e-12)


@given(st.floats(0.0, 100.0), st.floats(1e-3, 1.0))
def test_element_phase_range(d2, lam):
    ph = element_phase(d2, lam)
    assert 0.0 <= ph < 2 * math.pi


# --- phase pattern -----------------------------------------------------------

def _pattern_scenario(**kw):
    base = dict(irs=IrsGeometry(16, 16, 0.4, 0.32), antenna_distance=1.0,
                antenna_offset=(0.0, 0.16), carrier_hz=5.385e9)
    base.update(kw)
    return Scenario(**base)


def test_pattern_plane_wave_limit():
    s = _pattern_scenario(antenna_distance=2000.0, antenna_offset=(0.0, 0.0))
    pat = phase_pattern(s)
    spread = np.ptp(np.angle(np.exp(1j * (pat - pat[8, 8]))))
    assert spread < 0.1


def test_pattern_mirror_symmetric():
    pat = phase_pattern(_pattern_scenario())
    np.testing.assert_allclose(pat, pat[:, ::-1], atol=1e-9)


def test_pattern_matches_3d_geometry_oracle():
    s = _pattern_scenario(antenna_offset=(0.05, 0.1))
    ref = oracles.element_geometry(16, 16, 0.4, 0.32, 1.0, 0.05, 0.1)
    pat = phase_pattern(s)
    for (r, c), d in ref.items():
        expected = (2 * math.pi / s.wavelength) * math.fmod(d, s.wavelength)
        diff = math.remainder(pat[r, c] - expected, 2 * math.pi)
        assert abs(diff) < 1e-9


def test_round_trip_flag_doubles_lengths():
    s = _pattern_scenario()
    one = element_path_lengths(s)
    two = element_path_lengths(replace(s, round_trip_phase=True))
    np.testing.assert_array_equal(two, 2 * one)
    assert not np.array_equal(binary_projection(phase_pattern(s)),
                              binary_projection(phase_pattern(replace(s, round_trip_phase=True))))


# --- binary projection -------------------------------------------------------

def test_projection_uniform():
    assert binary_projection(np.zeros((3, 3))).all()
    assert not binary_projection(np.full((3, 3), math.pi)).any()


@given(st.floats(0, 2 * math.pi, exclude_max=True))
def test_projection_complement(thr):
    pat = np.random.default_rng(0).uniform(0, 2 * math.pi, (8, 8))
    a = binary_projection(pat, thr)
    b = binary_projection(pat, thr + math.pi)
    # elements exactly on a boundary can land in both halves through rounding
    rel = np.mod(pat - thr, 2 * math.pi)
    safe = np.abs(rel - math.pi) > 1e-9
    assert np.all((a ^ b)[safe] == 1)


# --- power budget ------------------------------------------------------------

def test_residual_si_power():
    assert residual_si_power(PowerBudget(0, 0, 0, 0)) == 0
    assert residual_si_power(PowerBudget(20, 40, -60, -80)) == 0
    assert PowerBudget(20, 40, -60, -80).p_res == 0


def test_linear_cancellation_leaves_breath_only():
    # one element, amplitude chosen so the IRS path negates SI plus statics exactly
    lam = 0.06
    g = IrsGeometry(1, 1, 0.01, 0.01, phase_shift=math.pi)
    si = SelfInterferenceParams(0.01 + 0.003j, 0.2)
    statics = [StaticPath(0.002, 1.3)]
    target = -(eval_self_interference(si) + eval_static_paths(statics, lam))
    amps = [target]
    z = eval_irs_paths(g, [[0]], amps, [0.0], lam) + eval_self_interference(si) + \
        eval_static_paths(statics, lam)
    assert abs(z) < 1e-17
    y_d = eval_breath_path(BreathPathParams(1e-4, 1.4, lam), 0.01)
    assert abs(abs(z + y_d) - abs(y_d)) < 1e-15


# --- full channel ------------------------------------------------------------

def random_scenario(rng, n_rows=None, n_cols=None):
    n_rows = n_rows or int(rng.integers(1, 6))
    n_cols = n_cols or int(rng.integers(1, 6))
    irs = IrsGeometry(n_rows, n_cols, rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5),
                      phase_shift=rng.uniform(0.1, 2 * math.pi),
                      element_reflectance=rng.uniform(0.1, 3))
    statics = tuple(StaticPath(complex(*rng.normal(0, 1e-3, 2)), rng.uniform(0, 10))
                    for _ in range(int(rng.integers(0, 4))))
    return Scenario(
        irs=irs,
        antenna_distance=rng.uniform(0.2, 3),
        antenna_offset=tuple(rng.uniform(-0.2, 0.2, 2)),
        static_paths=statics,
        breath_path=BreathPathParams(complex(*rng.normal(0, 1e-3, 2)), rng.uniform(0.5, 5), 0.0563),
        si=SelfInterferenceParams(complex(*rng.normal(0, 1e-2, 2)), rng.uniform(0, 1)),
        carrier_hz=rng.uniform(2.4e9, 5.9e9),
        n_subcarriers=int(rng.integers(1, 60)),
        round_trip_phase=bool(rng.integers(0, 2)),
    )


def total_channel_oracle(s, state, d_t, k):
    lam = oracles.subcarrier_wavelength(s.carrier_hz, s.subcarrier_spacing_hz, s.n_subcarriers, k)
    g = s.irs
    dist = oracles.element_geometry(g.n_rows, g.n_cols, g.width, g.height, s.antenna_distance,
                                    *s.antenna_offset)
    amps, lengths, bits = [], [], []
    area = g.width / g.n_cols * g.height / g.n_rows
    for r in range(g.n_rows):
        for c in range(g.n_cols):
            d2 = dist[r, c]
            amps.append(g.element_reflectance * area / (4 * math.pi * d2 * d2))
            lengths.append(2 * d2 if s.round_trip_phase else d2)
            bits.append(int(state[r, c]))
    y = oracles.static([(p.a, p.d) for p in s.static_paths], lam)
    y += oracles.breath(s.breath_path.a0, s.breath_path.d0, lam, d_t)
    y += oracles.irs(amps, lengths, bits, g.phase_shift, lam)
    y += oracles.self_interference(s.si.a_iso, s.si.theta)
    return y


def test_total_channel_zero_amplitudes():
    s = Scenario(IrsGeometry(2, 2, 0.1, 0.1, element_reflectance=0.0), 1.0,
                 breath_path=BreathPathParams(0j, 1.0, 0.06))
    assert eval_total_channel(s, np.ones((2, 2)), 0.01, 3) == 0j


def test_total_channel_si_only():
    s = Scenario(IrsGeometry(1, 1, 0.1, 0.1, element_reflectance=0.0), 1.0,
                 si=SelfInterferenceParams(1 + 0j, 0.0))
    for k in range(s.n_subcarriers):
        assert eval_total_channel(s, [[0]], 0.0, k) == 1 + 0j


def test_total_channel_index_range(canonical):
    with pytest.raises(IndexError):
        eval_total_channel(canonical, np.zeros((16, 16)), 0.0, 56)


def test_total_channel_is_component_sum(rng):
    for _ in range(50):
        s = random_scenario(rng)
        state = rng.integers(0, 2, s.irs.shape, dtype=np.uint8)
        d_t = rng.uniform(0, 0.05)
        lam = oracles.subcarrier_wavelength(s.carrier_hz, s.subcarrier_spacing_hz, s.n_subcarriers, 0)
        composed = (eval_static_paths(s.static_paths, lam)
                    + eval_breath_path(replace(s.breath_path, wavelength=lam), d_t)
                    + eval_irs_paths(s.irs, state, element_amplitudes(s), element_path_lengths(s), lam)
                    + eval_self_interference(s.si))
        assert rel_close(eval_total_channel(s, state, d_t, 0), composed)


def test_vectorized_channel_matches_scalar(rng):
    for _ in range(10):
        s = random_scenario(rng)
        state = rng.integers(0, 2, s.irs.shape, dtype=np.uint8)
        d = rng.uniform(0, 0.05, 4)
        M = channel_matrix(s, state, d)
        for i, d_t in enumerate(d):
            v = channel_vector(s, state, d_t)
            np.testing.assert_allclose(M[i], v, rtol=1e-12, atol=1e-18)
            for k in range(s.n_subcarriers):
                assert rel_close(v[k], eval_total_channel(s, state, d_t, k), 1e-11)


def test_subcarrier_map_symmetric(canonical):
    f = subcarrier_frequencies(canonical)
    assert f.shape == (56,)
    assert f.mean() == pytest.approx(canonical.carrier_hz, rel=1e-15)
    np.testing.assert_allclose(np.diff(f), 312.5e3, rtol=1e-9)


def test_amplitude_law_frequency_independent(canonical):
    d = element_distances(canonical)
    a = element_amplitudes(canonical)
    np.testing.assert_allclose(a * d ** 2, a.flat[0] * d.flat[0] ** 2, rtol=1e-12)


@given(st.integers(0, 2 ** 16 - 1))
def test_triangle_inequality(seed):
    r = np.random.default_rng(seed)
    s = random_scenario(r)
    state = r.integers(0, 2, s.irs.shape, dtype=np.uint8)
    lam = s.wavelength
    bound = (sum(abs(p.a) for p in s.static_paths) + abs(s.breath_path.a0)
             + np.abs(element_amplitudes(s)).sum() + abs(s.si.a_iso))
    assert abs(eval_total_channel(s, state, 0.0, 0)) <= bound * (1 + 1e-12)
    amps = element_amplitudes(s)
    assert abs(eval_irs_paths(s.irs, state, amps, element_path_lengths(s), lam)) <= \
        np.abs(amps).sum() * (1 + 1e-12)
