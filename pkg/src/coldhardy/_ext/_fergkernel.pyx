# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Ferguson simulation kernels.

Parameter rows follow ``coldhardy.ferguson.PARAM_ORDER``:
t_th, k_a_endo, k_a_eco, k_d_endo, k_d_eco, h_min, h_max, c_star, theta, h_init.
Arithmetic order matches ``coldhardy._fergpy`` line for line.
"""
import numpy as np
from libc.math cimport pow, fabs, sqrt, NAN

cdef inline double _run_day(double t, double* p, double* h, double* c, int* eco) noexcept nogil:
    cdef double diff = t - p[0]
    cdef double dd_h = diff if diff > 0.0 else 0.0
    cdef double dd_c = diff if diff < 0.0 else 0.0
    cdef double span = p[6] - p[5]
    cdef double ratio, dp, f_a, f_d, ka, kd, hn
    c[0] = c[0] + dd_c
    if c[0] <= p[7]:
        eco[0] = 1
    ratio = fabs(c[0]) / fabs(p[7])
    if ratio > 1.0:
        ratio = 1.0
    dp = pow(ratio, p[8])
    f_a = (h[0] - p[5]) / span
    f_d = (p[6] - h[0]) / span
    if eco[0]:
        ka = p[2]
        kd = p[4]
    else:
        ka = p[1]
        kd = p[3]
    hn = h[0] + (ka * dd_c * f_a + kd * dd_h * dp * f_d)
    if hn < p[5]:
        hn = p[5]
    elif hn > p[6]:
        hn = p[6]
    h[0] = hn
    return hn


def simulate(const double[::1] tmean, const double[:, ::1] params):
    """Daily hardiness for every parameter row: returns (P, T)."""
    cdef Py_ssize_t n_p = params.shape[0], n_t = tmean.shape[0]
    out_arr = np.empty((n_p, n_t), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[10] p
    cdef double h, c
    cdef int eco
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(n_p):
            for k in range(10):
                p[k] = params[i, k]
            h = p[9]
            c = 0.0
            eco = 0
            for j in range(n_t):
                out[i, j] = _run_day(tmean[j], p, &h, &c, &eco)
    return out_arr


def grid_sse(const double[::1] tmean, const long[::1] starts,
             const double[::1] target, const double[:, ::1] params):
    """Sum of squared LTE50 errors per parameter row.

    ``starts`` holds season offsets into ``tmean``/``target`` plus a final
    end offset; NaN targets are skipped.
    """
    cdef Py_ssize_t n_p = params.shape[0], n_s = starts.shape[0] - 1
    out_arr = np.zeros(n_p, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[10] p
    cdef double h, c, acc, e
    cdef int eco
    cdef Py_ssize_t i, j, k, s
    with nogil:
        for i in range(n_p):
            for k in range(10):
                p[k] = params[i, k]
            acc = 0.0
            for s in range(n_s):
                h = p[9]
                c = 0.0
                eco = 0
                for j in range(starts[s], starts[s + 1]):
                    _run_day(tmean[j], p, &h, &c, &eco)
                    if target[j] == target[j]:
                        e = h - target[j]
                        acc = acc + e * e
            out[i] = acc
    return out_arr
