# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled GRU time scans (time-major, fused gates, BLAS recurrences).

Shapes follow ``coldhardy._grupy``: ``xp`` is (T, B, 3H) input projections
with biases b_z, b_r, b_n folded in; ``u_t`` is (H, 3H) = [U_z; U_r; U_n]^T.
"""
import numpy as np
from cython cimport floating
from libc.math cimport exp, expf
from scipy.linalg.cython_blas cimport dgemm, sgemm


# Both built on exp(): glibc tanh/expm1 cost ~3x more per call and the
# scan is bound by these transcendental calls.
cdef inline floating _sigmoid(floating x) noexcept nogil:
    if floating is float:
        return 1.0 / (1.0 + expf(-x))
    else:
        return 1.0 / (1.0 + exp(-x))


cdef inline floating _tanh(floating x) noexcept nogil:
    return 2.0 * _sigmoid(2.0 * x) - 1.0


cdef inline void _gemm(int m, int n, int k, floating* a, int lda, floating* b, int ldb,
                       floating beta, floating* c, int ldc) noexcept nogil:
    # column-major C(m x n) = A(m x k) B(k x n) + beta C
    cdef char trans = b'N'
    cdef floating one = 1.0
    if floating is float:
        sgemm(&trans, &trans, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(&trans, &trans, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


def scan_forward(floating[:, :, ::1] xp, floating[:, ::1] u_t, floating[::1] b_hn,
                 floating[:, ::1] h0):
    cdef Py_ssize_t T = xp.shape[0], B = xp.shape[1], H = u_t.shape[0]
    dtype = np.float32 if floating is float else np.float64
    out_a = np.empty((T, B, H), dtype=dtype)
    z_a = np.empty((T, B, H), dtype=dtype)
    r_a = np.empty((T, B, H), dtype=dtype)
    n_a = np.empty((T, B, H), dtype=dtype)
    u_a = np.empty((T, B, H), dtype=dtype)
    rec_a = np.empty((B, 3 * H), dtype=dtype)
    cdef floating[:, :, ::1] out = out_a, zs = z_a, rs = r_a, ns = n_a, us = u_a
    cdef floating[:, ::1] rec = rec_a
    cdef floating* hp
    cdef floating* xt
    cdef floating* ot
    cdef floating* zt
    cdef floating* rt
    cdef floating* nt
    cdef floating* ut
    cdef floating* rc = &rec[0, 0]
    cdef floating* bh = &b_hn[0]
    cdef Py_ssize_t t, b, j, i3, i1
    cdef floating z, r, u, n
    cdef floating zero = 0.0
    if T == 0 or B == 0:
        return out_a, z_a, r_a, n_a, u_a
    with nogil:
        for t in range(T):
            hp = &h0[0, 0] if t == 0 else &out[t - 1, 0, 0]
            _gemm(<int>(3 * H), <int>B, <int>H, &u_t[0, 0], <int>(3 * H),
                  hp, <int>H, zero, rc, <int>(3 * H))
            xt = &xp[t, 0, 0]
            ot = &out[t, 0, 0]
            zt = &zs[t, 0, 0]
            rt = &rs[t, 0, 0]
            nt = &ns[t, 0, 0]
            ut = &us[t, 0, 0]
            for b in range(B):
                i3 = b * 3 * H
                i1 = b * H
                for j in range(H):
                    z = _sigmoid(xt[i3 + j] + rc[i3 + j])
                    r = _sigmoid(xt[i3 + H + j] + rc[i3 + H + j])
                    u = rc[i3 + 2 * H + j] + bh[j]
                    n = _tanh(xt[i3 + 2 * H + j] + r * u)
                    ot[i1 + j] = (1.0 - z) * n + z * hp[i1 + j]
                    zt[i1 + j] = z
                    rt[i1 + j] = r
                    nt[i1 + j] = n
                    ut[i1 + j] = u
    return out_a, z_a, r_a, n_a, u_a


def scan_backward(floating[:, :, ::1] dout, floating[:, :, ::1] h_prev,
                  floating[:, :, ::1] zs, floating[:, :, ::1] rs,
                  floating[:, :, ::1] ns, floating[:, :, ::1] us,
                  floating[:, ::1] u_cat):
    """Returns (da, dan): da is (T, B, 3H) = [d a_z, d a_r, d u], dan is (T, B, H)."""
    cdef Py_ssize_t T = dout.shape[0], B = dout.shape[1], H = dout.shape[2]
    dtype = np.float32 if floating is float else np.float64
    da_a = np.empty((T, B, 3 * H), dtype=dtype)
    dan_a = np.empty((T, B, H), dtype=dtype)
    dh_a = np.zeros((B, H), dtype=dtype)
    cdef floating[:, :, ::1] da = da_a, dan = dan_a
    cdef floating[:, ::1] dh_next = dh_a
    cdef Py_ssize_t t, b, j
    cdef floating dh, z, r, n, u, dn, dz, d_an, du, dr
    cdef floating one = 1.0
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    z = zs[t, b, j]
                    r = rs[t, b, j]
                    n = ns[t, b, j]
                    u = us[t, b, j]
                    dh = dout[t, b, j] + dh_next[b, j]
                    dn = dh * (1.0 - z)
                    dz = dh * (h_prev[t, b, j] - n)
                    d_an = dn * (1.0 - n * n)
                    du = d_an * r
                    dr = d_an * u
                    da[t, b, j] = dz * z * (1.0 - z)
                    da[t, b, H + j] = dr * r * (1.0 - r)
                    da[t, b, 2 * H + j] = du
                    dan[t, b, j] = d_an
                    dh_next[b, j] = dh * z
            # dh_next += da[t] @ u_cat, u_cat is (3H, H)
            _gemm(<int>H, <int>B, <int>(3 * H), &u_cat[0, 0], <int>H,
                  &da[t, 0, 0], <int>(3 * H), one, &dh_next[0, 0], <int>H)
    return da_a, dan_a
