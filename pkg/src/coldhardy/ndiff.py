"""Hand-written forward/backward passes for the fixed recurrent architecture.

Arrays are batch-major: a batch of seasons is ``(B, T, features)``. Shorter
seasons are right-padded; padding rows carry a false mask, and because the
recurrence is causal they never influence earlier days.

GRU convention (reset applied to the recurrent candidate term, with its own
recurrent bias)::

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    n = tanh(W_n x + b_n + r * (U_n h + b_hn))
    h' = (1 - z) * n + z * h
"""
from __future__ import annotations

import io
import json
import zlib
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import kernels

CHECKPOINT_VERSION = 1

GRU_BLOCKS = ("W_z", "W_r", "W_n", "U_z", "U_r", "U_n", "b_z", "b_r", "b_n", "b_hn")


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


def block_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per parameter block so blocks init identically
    regardless of which other blocks a model has."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def uniform_init(seed: int, name: str, shape, fan_in: int, dtype=np.float64) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return block_rng(seed, name).uniform(-bound, bound, size=shape).astype(dtype)


def sigmoid(x):
    # tanh form saturates to exactly 0/1 without overflow warnings
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def relu(x):
    return np.maximum(x, 0.0)


# -- dense -----------------------------------------------------------------

def dense_forward(x, W, b, activation: str = "identity"):
    x = np.asarray(x)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"dense: input {x.shape} vs weights {W.shape}, bias {b.shape}")
    a = x @ W.T + b
    if activation == "relu":
        return relu(a)
    if activation == "identity":
        return a
    raise ValueError(f"unknown activation {activation!r}")


def dense_backward(x, a, W, dout, activation):
    """Returns (dx, dW, db) for ``out = act(x W^T + b)`` with pre-activation ``a``."""
    da = dout * (a > 0) if activation == "relu" else dout
    flat_da = da.reshape(-1, da.shape[-1])
    flat_x = x.reshape(-1, x.shape[-1])
    return da @ W, flat_da.T @ flat_x, flat_da.sum(axis=0)


# -- GRU -------------------------------------------------------------------

@dataclass
class GruCache:
    """Time-major (T, B, .) intermediates of one forward scan."""

    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    n: np.ndarray
    u: np.ndarray


def _check_gru(p: Mapping[str, np.ndarray], in_dim: int) -> int:
    h = p["U_z"].shape[0]
    for k in ("W_z", "W_r", "W_n"):
        if p[k].shape != (h, in_dim):
            raise ShapeError(f"gru {k}: expected {(h, in_dim)}, got {p[k].shape}")
    for k in ("U_z", "U_r", "U_n"):
        if p[k].shape != (h, h):
            raise ShapeError(f"gru {k}: expected {(h, h)}, got {p[k].shape}")
    for k in ("b_z", "b_r", "b_n", "b_hn"):
        if p[k].shape != (h,):
            raise ShapeError(f"gru {k}: expected {(h,)}, got {p[k].shape}")
    return h


def gru_step(x_t, h_prev, p):
    """Single step for one sample or a batch (leading dims broadcast)."""
    x_t = np.asarray(x_t)
    h_prev = np.asarray(h_prev)
    h = _check_gru(p, x_t.shape[-1])
    if h_prev.shape[-1] != h:
        raise ShapeError(f"gru: hidden state {h_prev.shape} vs hidden size {h}")
    z = sigmoid(x_t @ p["W_z"].T + h_prev @ p["U_z"].T + p["b_z"])
    r = sigmoid(x_t @ p["W_r"].T + h_prev @ p["U_r"].T + p["b_r"])
    n = np.tanh(x_t @ p["W_n"].T + p["b_n"] + r * (h_prev @ p["U_n"].T + p["b_hn"]))
    return (1.0 - z) * n + z * h_prev


def _w_cat(p):
    return np.concatenate([p["W_z"], p["W_r"], p["W_n"]], axis=0)


def _u_cat(p):
    return np.concatenate([p["U_z"], p["U_r"], p["U_n"]], axis=0)


def gru_forward(x, p, h0=None):
    """Run the GRU over ``x`` of shape (B, T, in). Returns (B, T, H) and a cache."""
    B, T, in_dim = x.shape
    H = _check_gru(p, in_dim)
    dtype = x.dtype
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))
    b_cat = np.concatenate([p["b_z"], p["b_r"], p["b_n"]])
    xp = np.ascontiguousarray(xt @ _w_cat(p).T + b_cat, dtype=dtype)
    u_t = np.ascontiguousarray(_u_cat(p).T, dtype=dtype)
    h0 = np.zeros((B, H), dtype=dtype) if h0 is None else np.ascontiguousarray(h0, dtype=dtype)
    out, z, r, n, u = kernels.gru_scan_forward(xp, u_t, np.ascontiguousarray(p["b_hn"]), h0)
    h_prev = np.concatenate([h0[None], out[:-1]], axis=0)
    return out.transpose(1, 0, 2), GruCache(xt, h_prev, z, r, n, u)


def gru_backward(cache: GruCache, dout, p):
    """Backprop through all time steps. Returns (dx (B, T, in), grads dict)."""
    B, T, H = dout.shape
    dout_t = np.ascontiguousarray(dout.transpose(1, 0, 2), dtype=cache.z.dtype)
    u_cat = np.ascontiguousarray(_u_cat(p), dtype=cache.z.dtype)
    da, dan = kernels.gru_scan_backward(dout_t, cache.h_prev, cache.z, cache.r,
                                        cache.n, cache.u, u_cat)
    flat_da = da.reshape(-1, 3 * H)
    dpre = np.concatenate([flat_da[:, :2 * H], dan.reshape(-1, H)], axis=1)
    flat_x = cache.x.reshape(-1, cache.x.shape[-1])
    flat_h = cache.h_prev.reshape(-1, H)
    dW = dpre.T @ flat_x
    dU = flat_da.T @ flat_h
    db = dpre.sum(axis=0)
    g = {
        "W_z": dW[:H], "W_r": dW[H:2 * H], "W_n": dW[2 * H:],
        "U_z": dU[:H], "U_r": dU[H:2 * H], "U_n": dU[2 * H:],
        "b_z": db[:H], "b_r": db[H:2 * H], "b_n": db[2 * H:],
        "b_hn": flat_da[:, 2 * H:].sum(axis=0),
    }
    dx = (dpre @ _w_cat(p)).reshape(T, B, -1).transpose(1, 0, 2)
    return dx, g


# -- loss ------------------------------------------------------------------

def masked_mse(pred, target, mask):
    """Mean squared error over masked-in entries.

    Works on one sequence (T, K) or a batch (B, T, K); for a batch the loss is
    the mean of per-sequence losses. Returns (loss, d loss / d pred).
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ShapeError(f"masked_mse: pred {pred.shape}, target {target.shape}, mask {mask.shape}")
    batched = pred.ndim == 3
    if not batched:
        pred, target, mask = pred[None], target[None], mask[None]
    diff = np.where(mask, pred - np.where(mask, target, 0.0), 0.0)
    count = np.maximum(mask.sum(axis=(1, 2)), 1).astype(pred.dtype)
    per_seq = (diff * diff).sum(axis=(1, 2)) / count
    B = pred.shape[0]
    loss = per_seq.sum() / B
    grad = (2.0 / B) * diff / count[:, None, None]
    if not batched:
        grad = grad[0]
    return float(loss), grad


# -- Adam ------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.t,
                         {k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()})


def adam_step(params: dict, grads: Mapping[str, np.ndarray], state: AdamState,
              only: set | None = None) -> None:
    """Bias-corrected Adam, in place on ``params`` and ``state``.

    Blocks absent from ``grads`` (or outside ``only``) are left untouched,
    which is how frozen parameters are expressed.
    """
    names = [k for k in params if k in grads and (only is None or k in only)]
    for k in names:
        if not np.all(np.isfinite(grads[k])):
            raise NumericError(f"non-finite gradient in block {k}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for k in names:
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# -- gradient check ----------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_block: str
    worst_index: tuple
    per_block: dict
    n_checked: int
    n_kinks: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol

    def __str__(self):
        return (f"max relative error {self.max_rel_error:.3e} at {self.worst_block}"
                f"{list(self.worst_index)} over {self.n_checked} coordinates"
                f" ({self.n_kinks} skipped at activation kinks)")


def grad_check(loss_fn: Callable[[dict], float], params: dict, grads: Mapping[str, np.ndarray],
               eps: float = 1e-5, per_block: int = 12, seed: int = 0,
               floor: float | None = None) -> GradCheckReport:
    """Compare ``grads`` against central differences of ``loss_fn``.

    For each block, ``per_block`` coordinates are checked: the ones with the
    largest analytic magnitude plus a seeded random sample. Relative error is
    ``|a - n| / max(|a| + |n|, floor)``. By default ``floor`` is tied to the
    roundoff of the difference quotient, ``1e5 * |L| * machine_eps / eps``,
    so coordinates whose true gradient is below that noise are judged on
    absolute error instead of amplifying it.

    ``loss_fn`` may return ``(loss, key)`` where ``key`` identifies the active
    piecewise-linear region (e.g. packed ReLU masks). A coordinate whose
    +eps and -eps evaluations land in different regions straddles a kink,
    where the central difference is not a derivative; it is skipped and
    counted in ``n_kinks``.
    """
    def evaluate():
        out = loss_fn(params)
        return out if isinstance(out, tuple) else (out, None)

    if floor is None:
        base = abs(evaluate()[0])
        floor = max(1e-12, 1e5 * base * np.finfo(np.float64).eps / eps)
    rng = np.random.default_rng(seed)
    worst = (0.0, "", ())
    blocks = {}
    total = kinks = 0
    for name in params:
        p = params[name]
        g = np.asarray(grads[name])
        size = p.size
        if size == 0:
            continue
        k = min(per_block, size)
        top = np.argsort(-np.abs(g).ravel(), kind="stable")[: k // 2]
        rand = rng.choice(size, size=k - len(top), replace=False)
        coords = list(dict.fromkeys(int(i) for i in np.concatenate([top, rand])))
        block_worst = 0.0
        for flat in coords:
            idx = np.unravel_index(flat, p.shape)
            orig = p[idx]
            p[idx] = orig + eps
            lp, kp = evaluate()
            p[idx] = orig - eps
            lm, km = evaluate()
            p[idx] = orig
            if kp is not None and kp != km:
                kinks += 1
                continue
            num = (lp - lm) / (2 * eps)
            ana = float(g[idx])
            rel = abs(ana - num) / max(abs(ana) + abs(num), floor)
            total += 1
            if rel > block_worst:
                block_worst = rel
            if rel > worst[0]:
                worst = (rel, name, tuple(int(i) for i in idx))
        blocks[name] = block_worst
    return GradCheckReport(worst[0], worst[1], worst[2], blocks, total, kinks)


# -- checkpoints -------------------------------------------------------------

def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: dict) -> None:
    """Write a versioned ``.npz``: one entry per block plus a JSON header."""
    header = dict(meta, version=CHECKPOINT_VERSION,
                  blocks={k: list(v.shape) for k, v in arrays.items()})
    payload = {f"p/{k}": np.ascontiguousarray(v) for k, v in arrays.items()}
    payload["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_arrays(path) -> tuple[dict, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        arrays = {k[2:]: data[k].copy() for k in data.files if k.startswith("p/")}
    for k, shape in meta["blocks"].items():
        if list(arrays[k].shape) != shape:
            raise ValueError(f"checkpoint block {k} has shape {arrays[k].shape}, header says {shape}")
    return arrays, meta
