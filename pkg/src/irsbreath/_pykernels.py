"""Pure-numpy implementations of the hot loops, used when the compiled module is absent."""

import numpy as np


def irs_response(coeffs, bits, switch_factor):
    """Per-subcarrier IRS sum ``sum_i c_ki * exp(j s_i phi)`` for one binary state.

    ``coeffs`` is ``(K, I)`` complex, ``bits`` is ``(I,)`` uint8 and
    ``switch_factor`` is ``exp(j phi)``.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[0] != coeffs.shape[1]:
        raise ValueError(f"bits length {bits.shape[0]} does not match {coeffs.shape[1]} elements")
    on = coeffs[:, bits.astype(bool)].sum(axis=1)
    return coeffs.sum(axis=1) + (switch_factor - 1.0) * on


def weighted_on_ratio(states, weights):
    states = np.asarray(states, dtype=np.uint8)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != states.shape[0]:
        raise ValueError(
            f"weights length {weights.shape[0]} does not match buffer length {states.shape[0]}"
        )
    return weights @ states.astype(np.float64)


def unwrap(phase):
    return np.unwrap(np.asarray(phase, dtype=np.float64))
