# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport M_PI, floor

cnp.import_array()


def irs_response(const double complex[:, ::1] coeffs,
                 const unsigned char[::1] bits,
                 double complex switch_factor):
    cdef Py_ssize_t n_sub = coeffs.shape[0]
    cdef Py_ssize_t n_el = coeffs.shape[1]
    if bits.shape[0] != n_el:
        raise ValueError("bits length %d does not match %d elements" % (bits.shape[0], n_el))
    out = np.empty(n_sub, dtype=np.complex128)
    cdef double complex[::1] out_v = out
    cdef Py_ssize_t k, i
    cdef double complex acc_all, acc_on, c
    for k in range(n_sub):
        acc_all = 0
        acc_on = 0
        for i in range(n_el):
            c = coeffs[k, i]
            acc_all = acc_all + c
            if bits[i]:
                acc_on = acc_on + c
        out_v[k] = acc_all + (switch_factor - 1.0) * acc_on
    return out


def weighted_on_ratio(const unsigned char[:, ::1] states, const double[::1] weights):
    cdef Py_ssize_t n_buf = states.shape[0]
    cdef Py_ssize_t n_el = states.shape[1]
    if weights.shape[0] != n_buf:
        raise ValueError("weights length %d does not match buffer length %d" % (weights.shape[0], n_buf))
    out = np.zeros(n_el, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef Py_ssize_t l, i
    cdef double w
    for l in range(n_buf):
        w = weights[l]
        for i in range(n_el):
            # branchless: random bits defeat the branch predictor
            out_v[i] += w * states[l, i]
    return out


def unwrap(const double[::1] phase):
    cdef Py_ssize_t n = phase.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    if n == 0:
        return out
    cdef double two_pi = 2.0 * M_PI
    cdef double offset = 0.0
    cdef double step
    cdef Py_ssize_t i
    out_v[0] = phase[0]
    for i in range(1, n):
        step = phase[i] - phase[i - 1]
        if step > M_PI or step < -M_PI:
            offset -= two_pi * floor((step + M_PI) / two_pi)
        out_v[i] = phase[i] + offset
    return out
