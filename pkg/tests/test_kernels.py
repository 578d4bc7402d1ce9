import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irsbreath import _pykernels, kernels

ck = pytest.importorskip("irsbreath._ckernels", reason="compiled kernels not built")


@pytest.mark.skipif(os.environ.get("IRSBREATH_PURE_PYTHON", "") not in ("", "0"),
                    reason="fallback forced")
def test_compiled_backend_selected():
    assert kernels.BACKEND == "cython"


def test_env_forces_pure_python():
    code = "from irsbreath import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"IRSBREATH_PURE_PYTHON": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "python"


@given(st.integers(1, 8), st.integers(1, 40), st.integers(0, 10_000))
def test_irs_response_backends_agree(K, n, seed):
    r = np.random.default_rng(seed)
    c = r.normal(size=(K, n)) + 1j * r.normal(size=(K, n))
    bits = r.integers(0, 2, n, dtype=np.uint8)
    sw = np.exp(1j * r.uniform(0, 2 * np.pi))
    np.testing.assert_allclose(ck.irs_response(c, bits, sw), _pykernels.irs_response(c, bits, sw),
                               rtol=1e-12, atol=1e-12)


@given(st.integers(1, 12), st.integers(1, 40), st.integers(0, 10_000))
def test_weighted_on_ratio_backends_agree(L, n, seed):
    r = np.random.default_rng(seed)
    s = r.integers(0, 2, (L, n), dtype=np.uint8)
    w = r.random(L)
    np.testing.assert_allclose(ck.weighted_on_ratio(s, w), _pykernels.weighted_on_ratio(s, w),
                               rtol=1e-12, atol=1e-15)


@given(st.integers(1, 500), st.floats(0.1, 6.0), st.integers(0, 10_000))
def test_unwrap_backends_agree(n, scale, seed):
    x = np.cumsum(np.random.default_rng(seed).normal(0, scale, n))
    w = np.angle(np.exp(1j * x))
    np.testing.assert_allclose(ck.unwrap(w), _pykernels.unwrap(w), rtol=0, atol=1e-12)


def test_unwrap_exact_pi_step_matches_numpy():
    w = np.array([0.0, np.pi, 0.0, -np.pi, 0.0])
    np.testing.assert_array_equal(ck.unwrap(w), np.unwrap(w))


def test_empty_inputs():
    assert ck.unwrap(np.zeros(0)).shape == (0,)
    out = ck.weighted_on_ratio(np.zeros((0, 3), np.uint8), np.zeros(0))
    np.testing.assert_array_equal(out, np.zeros(3))


@pytest.mark.parametrize("mod", [ck, _pykernels], ids=["cython", "python"])
def test_shape_mismatch_rejected(mod):
    with pytest.raises(ValueError, match="does not match"):
        mod.irs_response(np.ones((2, 3), complex), np.ones(4, np.uint8), 1j)
    with pytest.raises(ValueError, match="does not match"):
        mod.weighted_on_ratio(np.ones((2, 3), np.uint8), np.ones(3))
