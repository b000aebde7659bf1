"""Pure numpy Ferguson kernels, vectorised over parameter rows.

Same signatures and arithmetic order as the compiled ``_fergkernel``.
"""
import numpy as np


def _run_day(t, p, h, c, eco):
    diff = t - p[:, 0]
    dd_h = np.where(diff > 0.0, diff, 0.0)
    dd_c = np.where(diff < 0.0, diff, 0.0)
    span = p[:, 6] - p[:, 5]
    c += dd_c
    eco |= c <= p[:, 7]
    ratio = np.minimum(np.abs(c) / np.abs(p[:, 7]), 1.0)
    dp = np.power(ratio, p[:, 8])
    f_a = (h - p[:, 5]) / span
    f_d = (p[:, 6] - h) / span
    ka = np.where(eco, p[:, 2], p[:, 1])
    kd = np.where(eco, p[:, 4], p[:, 3])
    hn = h + (ka * dd_c * f_a + kd * dd_h * dp * f_d)
    h[:] = np.minimum(np.maximum(hn, p[:, 5]), p[:, 6])


def simulate(tmean, params):
    params = np.ascontiguousarray(params, dtype=np.float64)
    n_p, n_t = params.shape[0], len(tmean)
    out = np.empty((n_p, n_t))
    h = params[:, 9].copy()
    c = np.zeros(n_p)
    eco = np.zeros(n_p, dtype=bool)
    for j in range(n_t):
        _run_day(tmean[j], params, h, c, eco)
        out[:, j] = h
    return out


def grid_sse(tmean, starts, target, params):
    params = np.ascontiguousarray(params, dtype=np.float64)
    n_p = params.shape[0]
    acc = np.zeros(n_p)
    for s in range(len(starts) - 1):
        h = params[:, 9].copy()
        c = np.zeros(n_p)
        eco = np.zeros(n_p, dtype=bool)
        for j in range(starts[s], starts[s + 1]):
            _run_day(tmean[j], params, h, c, eco)
            if target[j] == target[j]:
                e = h - target[j]
                acc = acc + e * e
    return acc
