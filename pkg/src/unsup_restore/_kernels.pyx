# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loops for the sample-recursive DSP kernels.

Each function mirrors one in ``_fallback.py``. The recursive filters use the
same operation order and agree bit for bit; ``polyphase`` agrees to rounding
(the fallback sums taps with numpy).
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def biquad(const double[::1] x, double b0, double b1, double b2,
           double a1, double a2):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0, xi, yi
    with nogil:
        for i in range(n):
            xi = x[i]
            yi = b0 * xi + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2
            x2 = x1
            x1 = xi
            y2 = y1
            y1 = yi
            y[i] = yi
    return out


def overdrive(const double[::1] x, double gain, double colour):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double d, d0, last_in = 0.0, last_out = 0.0, o
    with nogil:
        for i in range(n):
            d0 = x[i]
            d = d0 * gain + colour
            if d < -1.0:
                d = -2.0 / 3.0
            elif d > 1.0:
                d = 2.0 / 3.0
            else:
                d = d - d * d * d * (1.0 / 3.0)
            last_out = d - last_in + 0.995 * last_out
            last_in = d
            o = d0 * 0.5 + last_out * 0.75
            if o > 1.0:
                o = 1.0
            elif o < -1.0:
                o = -1.0
            y[i] = o
    return out


def polyphase(const double[::1] xpad, const double[:, ::1] table,
              long up, long down, Py_ssize_t n_out):
    cdef Py_ssize_t taps = table.shape[1], n, j, q, p
    out = np.empty(n_out, dtype=np.float64)
    cdef double[::1] y = out
    cdef double acc
    cdef long long pos
    with nogil:
        for n in range(n_out):
            pos = <long long>n * down
            q = <Py_ssize_t>(pos // up)
            p = <Py_ssize_t>(pos % up)
            acc = 0.0
            for j in range(taps):
                acc = acc + table[p, j] * xpad[q + 1 + j]
            y[n] = acc
    return out
