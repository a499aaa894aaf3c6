"""Compiled hot kernels: RIR arrival accumulation and direct CQT.

Numerics must match kernels/numpy_ref.py (same window and normalization
formulas); the test suite asserts agreement between the two paths.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, floor, sin

cnp.import_array()

cdef double PI = 3.141592653589793238462643383279502884


def rir_accumulate(double[::1] taps, double[::1] delays, double[::1] amps, int half):
    cdef Py_ssize_t n_taps = taps.shape[0]
    cdef Py_ssize_t n = delays.shape[0]
    cdef Py_ssize_t i, idx
    cdef long k, i0
    cdef double d, a, frac, u, s, w
    for i in range(n):
        d = delays[i]
        a = amps[i]
        i0 = <long>floor(d)
        frac = d - i0
        for k in range(-half, half + 1):
            idx = i0 + k
            if idx < 0 or idx >= n_taps:
                continue
            u = k - frac
            if u == 0.0:
                s = 1.0
            else:
                s = sin(PI * u) / (PI * u)
            w = 0.5 * (1.0 + cos(PI * u / (half + 1)))
            taps[idx] += a * s * w


def cqt_direct(double[::1] x, double fs, double[::1] freqs, long[::1] lengths,
               long hop, long n_frames):
    cdef Py_ssize_t n_bins = freqs.shape[0]
    cdef Py_ssize_t n_sig = x.shape[0]
    cdef Py_ssize_t k, t, j, start
    cdef long n_k, lo, hi
    cdef double step, ph, acc_re, acc_im, v

    out = np.empty((n_frames, n_bins), dtype=np.complex128)
    cdef double[:, :, ::1] o = out.view(np.float64).reshape(n_frames, n_bins, 2)

    cdef long n_max = 0
    for k in range(n_bins):
        if lengths[k] > n_max:
            n_max = lengths[k]
    ker_re_arr = np.empty(n_max, dtype=np.float64)
    ker_im_arr = np.empty(n_max, dtype=np.float64)
    cdef double[::1] ker_re = ker_re_arr
    cdef double[::1] ker_im = ker_im_arr

    for k in range(n_bins):
        n_k = lengths[k]
        step = 2.0 * PI * freqs[k] / fs
        for j in range(n_k):
            if n_k > 1:
                v = 0.54 - 0.46 * cos(2.0 * PI * j / (n_k - 1))
            else:
                v = 1.0
            ph = step * j
            ker_re[j] = v * cos(ph) / n_k
            ker_im[j] = -v * sin(ph) / n_k
        for t in range(n_frames):
            start = t * hop - n_k // 2
            lo = 0 if start >= 0 else -start
            hi = n_k if start + n_k <= n_sig else n_sig - start
            acc_re = 0.0
            acc_im = 0.0
            for j in range(lo, hi):
                v = x[start + j]
                acc_re += v * ker_re[j]
                acc_im += v * ker_im[j]
            o[t, k, 0] = acc_re
            o[t, k, 1] = acc_im
    return out
