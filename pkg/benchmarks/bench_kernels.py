"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Both backends are imported
directly, so the comparison does not depend on ``IRSBREATH_PURE_PYTHON``.
"""

import argparse
import timeit

import numpy as np

from irsbreath import _pykernels

try:
    from irsbreath import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    K, I, L = 56, 256, 100
    coeffs = rng.standard_normal((K, I)) + 1j * rng.standard_normal((K, I))
    bits = rng.integers(0, 2, I, dtype=np.uint8)
    states = rng.integers(0, 2, (L, I), dtype=np.uint8)
    w = np.arange(L, 0, -1, dtype=np.float64)
    w /= w.sum()
    phase = np.angle(np.exp(1j * np.cumsum(rng.normal(0, 0.5, 72_000))))
    return {
        "irs_response 56x256": (lambda k: k.irs_response(coeffs, bits, -1.0 + 0j)),
        "weighted_on_ratio 100x256": (lambda k: k.weighted_on_ratio(states, w)),
        "unwrap 72000": (lambda k: k.unwrap(phase)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args()

    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not available; timing the fallback only")

    print(f"{'kernel':<28}" + "".join(f"{b:>14}" for b in backends) + "   speedup")
    for name, fn in cases(np.random.default_rng(0)).items():
        ref = fn(_pykernels)
        times = {}
        for b, mod in backends.items():
            np.testing.assert_allclose(fn(mod), ref, rtol=1e-12, atol=1e-12)
            t = min(timeit.repeat(lambda: fn(mod), repeat=args.repeat, number=args.number))
            times[b] = t / args.number * 1e6
        line = f"{name:<28}" + "".join(f"{times[b]:>11.1f} us" for b in backends)
        if "cython" in times:
            line += f"   {times['python'] / times['cython']:.1f}x"
        print(line)


if __name__ == "__main__":
    main()
