"""Numpy GRU time scans; fallback for the compiled ``_grukernel``."""
import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def scan_forward(xp, u_t, b_hn, h0):
    T, B, H3 = xp.shape
    H = H3 // 3
    out = np.empty((T, B, H), dtype=xp.dtype)
    zs, rs, ns, us = (np.empty_like(out) for _ in range(4))
    h = h0
    for t in range(T):
        rec = h @ u_t
        z = _sigmoid(xp[t, :, :H] + rec[:, :H])
        r = _sigmoid(xp[t, :, H:2 * H] + rec[:, H:2 * H])
        u = rec[:, 2 * H:] + b_hn
        n = np.tanh(xp[t, :, 2 * H:] + r * u)
        h = (1.0 - z) * n + z * h
        out[t], zs[t], rs[t], ns[t], us[t] = h, z, r, n, u
    return out, zs, rs, ns, us


def scan_backward(dout, h_prev, zs, rs, ns, us, u_cat):
    T, B, H = dout.shape
    da = np.empty((T, B, 3 * H), dtype=dout.dtype)
    dan = np.empty((T, B, H), dtype=dout.dtype)
    dh_next = np.zeros((B, H), dtype=dout.dtype)
    for t in range(T - 1, -1, -1):
        z, r, n, u = zs[t], rs[t], ns[t], us[t]
        dh = dout[t] + dh_next
        dn = dh * (1.0 - z)
        dz = dh * (h_prev[t] - n)
        d_an = dn * (1.0 - n * n)
        du = d_an * r
        dr = d_an * u
        da[t, :, :H] = dz * z * (1.0 - z)
        da[t, :, H:2 * H] = dr * r * (1.0 - r)
        da[t, :, 2 * H:] = du
        dan[t] = d_an
        dh_next = dh * z + da[t] @ u_cat
    return da, dan
