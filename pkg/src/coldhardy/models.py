"""Recurrent backbone and the five prediction architectures.

    backbone:  FC(relu) -> FC(relu) -> GRU -> FC(relu)
    STL:       backbone -> FC(3)
    MultiH:    backbone -> FC(3) chosen by task id
    AddE/MultE/ConcatE: task embedding combined with the raw input
               (x + e, x * e, [x; e]) before the backbone, single FC(3) head

Heads are stored as one ``(n_heads, 3, d)`` block for every variant, STL
being the one-head case, so STL and a one-task MultiH share their code path.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ndiff
from .ndiff import AdamState, ShapeError, adam_step, masked_mse

VARIANTS = ("STL", "MultiH", "AddE", "ConcatE", "MultE")
EMBED_MODES = {"AddE": "add", "ConcatE": "concat", "MultE": "mult"}

PAPER_FC = (1024, 2048, 1024)
PAPER_GRU = 2048
DESK_FC = (64, 128, 64)
DESK_GRU = 128


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "STL"
    input_dim: int = 12
    fc_dims: tuple = PAPER_FC
    gru_hidden: int = PAPER_GRU
    n_tasks: int = 1
    embed_dim: int | None = None
    output_dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "fc_dims", tuple(int(d) for d in self.fc_dims))
        if self.embed_dim is None:
            object.__setattr__(self, "embed_dim", self.input_dim)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.output_dim != 3:
            raise ValueError("output_dim must be 3 (LTE10, LTE50, LTE90)")
        if len(self.fc_dims) != 3:
            raise ValueError("fc_dims needs three entries")
        if self.n_tasks < 1:
            raise ValueError("n_tasks must be >= 1")
        if self.variant == "STL" and self.n_tasks != 1:
            raise ValueError("STL models have exactly one task")
        if self.variant in ("AddE", "MultE") and self.embed_dim != self.input_dim:
            raise ValueError(f"{self.variant} needs embed_dim == input_dim")

    @classmethod
    def desk(cls, variant: str = "STL", **kw) -> "ModelSpec":
        return cls(variant=variant, fc_dims=DESK_FC, gru_hidden=DESK_GRU, **kw)

    @property
    def n_heads(self) -> int:
        return self.n_tasks if self.variant == "MultiH" else 1

    @property
    def embed_mode(self) -> str | None:
        return EMBED_MODES.get(self.variant)

    @property
    def backbone_input(self) -> int:
        if self.variant == "ConcatE":
            return self.input_dim + self.embed_dim
        return self.input_dim

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fc_dims"] = list(self.fc_dims)
        return d


def block_shapes(spec: ModelSpec) -> dict[str, tuple]:
    f1, f2, f3 = spec.fc_dims
    H = spec.gru_hidden
    shapes = {
        "fc1.W": (f1, spec.backbone_input), "fc1.b": (f1,),
        "fc2.W": (f2, f1), "fc2.b": (f2,),
        "gru.W_z": (H, f2), "gru.W_r": (H, f2), "gru.W_n": (H, f2),
        "gru.U_z": (H, H), "gru.U_r": (H, H), "gru.U_n": (H, H),
        "gru.b_z": (H,), "gru.b_r": (H,), "gru.b_n": (H,), "gru.b_hn": (H,),
        "fc3.W": (f3, H), "fc3.b": (f3,),
        "head.W": (spec.n_heads, 3, f3), "head.b": (spec.n_heads, 3),
    }
    if spec.embed_mode:
        shapes["embed.E"] = (spec.n_tasks, spec.embed_dim)
    return shapes


BACKBONE_BLOCKS = ("fc1.W", "fc1.b", "fc2.W", "fc2.b") + tuple(
    f"gru.{k}" for k in ndiff.GRU_BLOCKS) + ("fc3.W", "fc3.b")


def init_params(spec: ModelSpec, seed: int, dtype=np.float64) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, one RNG stream per block."""
    params = {}
    for name, shape in block_shapes(spec).items():
        if name == "embed.E":
            params[name] = ndiff.uniform_init(seed, name, shape, spec.n_tasks, dtype)
        elif name.split(".")[1].startswith("b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = ndiff.uniform_init(seed, name, shape, shape[-1], dtype)
    return params


def embed_combine(x, e, mode: str):
    """Combine inputs ``x`` (..., D) with a task vector ``e`` broadcast over time."""
    x = np.asarray(x)
    e = np.asarray(e)
    if mode == "add":
        if x.shape[-1] != e.shape[-1]:
            raise ShapeError(f"add: input dim {x.shape[-1]} vs embedding dim {e.shape[-1]}")
        return x + e
    if mode == "mult":
        if x.shape[-1] != e.shape[-1]:
            raise ShapeError(f"mult: input dim {x.shape[-1]} vs embedding dim {e.shape[-1]}")
        return x * e
    if mode == "concat":
        e_b = np.broadcast_to(e, x.shape[:-1] + e.shape[-1:])
        return np.concatenate([x, e_b], axis=-1)
    raise ValueError(f"unknown combine mode {mode!r}")


@dataclass
class ForwardCache:
    task_ids: np.ndarray
    x: np.ndarray
    task_vec: np.ndarray | None
    x0: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    gru: ndiff.GruCache
    g: np.ndarray
    a3: np.ndarray
    h3: np.ndarray


@dataclass
class Model:
    spec: ModelSpec
    params: dict
    # Finetuning an embedding model: task vectors built from alpha @ E.
    extra: dict = field(default_factory=dict)

    @classmethod
    def create(cls, spec: ModelSpec, seed: int = 0, dtype=np.float64) -> "Model":
        return cls(spec, init_params(spec, seed, dtype))

    @property
    def dtype(self):
        return self.params["fc1.W"].dtype

    def copy(self) -> "Model":
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()},
                     {k: v.copy() for k, v in self.extra.items()})

    def _task_vectors(self, task_ids):
        E = self.params["embed.E"]
        if "alpha" in self.extra:
            # task id == n_tasks addresses the new, alpha-combined task
            new = self.extra["alpha"] @ E
            table = np.vstack([E, new[None, :]])
            return table[task_ids]
        return E[task_ids]

    def _head_index(self, task_ids):
        if self.spec.variant == "MultiH":
            return task_ids
        return np.zeros_like(task_ids)

    def forward(self, x, task_ids=None):
        """Predictions (B, T, 3) for inputs (B, T, input_dim) or (T, input_dim)."""
        pred, _ = self.forward_cached(x, task_ids)
        return pred

    def forward_cached(self, x, task_ids=None):
        p = self.params
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        B = x.shape[0]
        if x.shape[-1] != self.spec.input_dim:
            raise ShapeError(f"input feature dim {x.shape[-1]} != {self.spec.input_dim}")
        task_ids = self._check_tasks(task_ids, B)

        task_vec = None
        x0 = x
        if self.spec.embed_mode:
            task_vec = self._task_vectors(task_ids)
            x0 = embed_combine(x, task_vec[:, None, :], self.spec.embed_mode)
        a1 = x0 @ p["fc1.W"].T + p["fc1.b"]
        h1 = ndiff.relu(a1)
        a2 = h1 @ p["fc2.W"].T + p["fc2.b"]
        h2 = ndiff.relu(a2)
        gru_p = {k: p[f"gru.{k}"] for k in ndiff.GRU_BLOCKS}
        g, gcache = ndiff.gru_forward(h2, gru_p)
        a3 = g @ p["fc3.W"].T + p["fc3.b"]
        h3 = ndiff.relu(a3)
        heads = self._heads()
        hidx = self._head_index(task_ids)
        Wsel, bsel = heads[0][hidx], heads[1][hidx]
        pred = np.matmul(h3, Wsel.transpose(0, 2, 1)) + bsel[:, None, :]
        cache = ForwardCache(task_ids, x, task_vec, x0, a1, h1, a2, h2, gcache, g, a3, h3)
        return (pred[0] if single else pred), cache

    def _heads(self):
        W, b = self.params["head.W"], self.params["head.b"]
        if "new_head.W" in self.extra:
            W = np.concatenate([W, self.extra["new_head.W"][None]], axis=0)
            b = np.concatenate([b, self.extra["new_head.b"][None]], axis=0)
        return W, b

    @property
    def n_addressable_tasks(self) -> int:
        extra = "new_head.W" in self.extra or "alpha" in self.extra
        return self.spec.n_tasks + int(extra)

    def _check_tasks(self, task_ids, B):
        if task_ids is None:
            task_ids = np.zeros(B, dtype=np.int64)
        task_ids = np.atleast_1d(np.asarray(task_ids, dtype=np.int64))
        if task_ids.shape == (1,) and B > 1:
            task_ids = np.repeat(task_ids, B)
        if task_ids.shape != (B,):
            raise ShapeError(f"need one task id per sequence, got {task_ids.shape} for batch {B}")
        n = self.n_addressable_tasks
        if np.any(task_ids < 0) or np.any(task_ids >= n):
            raise IndexError(f"task id out of range [0, {n}): {task_ids.tolist()}")
        return task_ids

    def backward(self, cache: ForwardCache, dpred, need_input_grad: bool = False):
        """Gradients of a scalar loss given ``dpred`` = dL/dpred (B, T, 3)."""
        p = self.params
        grads = {}
        if dpred.ndim == 2:
            dpred = dpred[None]
        W, _ = self._heads()
        hidx = self._head_index(cache.task_ids)
        dWsel = np.matmul(dpred.transpose(0, 2, 1), cache.h3)  # (B, 3, d)
        dbsel = dpred.sum(axis=1)
        dW_all = np.zeros_like(W)
        db_all = np.zeros(W.shape[:2], dtype=W.dtype)
        np.add.at(dW_all, hidx, dWsel)
        np.add.at(db_all, hidx, dbsel)
        n_old = self.params["head.W"].shape[0]
        grads["head.W"], grads["head.b"] = dW_all[:n_old], db_all[:n_old]
        if "new_head.W" in self.extra:
            grads["new_head.W"], grads["new_head.b"] = dW_all[n_old], db_all[n_old]

        dh3 = np.matmul(dpred, W[hidx])
        dg, grads["fc3.W"], grads["fc3.b"] = ndiff.dense_backward(
            cache.g, cache.a3, p["fc3.W"], dh3, "relu")
        gru_p = {k: p[f"gru.{k}"] for k in ndiff.GRU_BLOCKS}
        dh2, ggru = ndiff.gru_backward(cache.gru, dg, gru_p)
        for k, v in ggru.items():
            grads[f"gru.{k}"] = v
        dh1, grads["fc2.W"], grads["fc2.b"] = ndiff.dense_backward(
            cache.h1, cache.a2, p["fc2.W"], dh2, "relu")
        dx0, grads["fc1.W"], grads["fc1.b"] = ndiff.dense_backward(
            cache.x0, cache.a1, p["fc1.W"], dh1, "relu")

        mode = self.spec.embed_mode
        if mode:
            D = self.spec.input_dim
            if mode == "add":
                de = dx0.sum(axis=1)
            elif mode == "mult":
                de = (dx0 * cache.x).sum(axis=1)
            else:
                de = dx0[..., D:].sum(axis=1)
            E = p["embed.E"]
            if "alpha" in self.extra:
                dtable = np.zeros((E.shape[0] + 1, E.shape[1]), dtype=E.dtype)
                np.add.at(dtable, cache.task_ids, de)
                grads["embed.E"] = dtable[:-1] + np.outer(self.extra["alpha"], dtable[-1])
                grads["alpha"] = E @ dtable[-1]
            else:
                dE = np.zeros_like(E)
                np.add.at(dE, cache.task_ids, de)
                grads["embed.E"] = dE
        if need_input_grad:
            D = self.spec.input_dim
            dx = dx0[..., :D] if mode == "concat" else (
                dx0 * cache.task_vec[:, None, :] if mode == "mult" else dx0)
            grads["__input__"] = dx
        return grads

    def loss_and_grads(self, x, target, mask, task_ids=None):
        pred, cache = self.forward_cached(x, task_ids)
        loss, dpred = masked_mse(pred, target, mask)
        return loss, self.backward(cache, dpred)

    def all_trainables(self) -> dict:
        """Parameter blocks and finetune extras in one name -> array mapping."""
        out = dict(self.params)
        out.update(self.extra)
        return out

    # -- persistence -----------------------------------------------------

    def save(self, path, meta: dict | None = None) -> None:
        arrays = dict(self.params)
        arrays.update({f"extra.{k}": v for k, v in self.extra.items()})
        header = {"spec": self.spec.to_dict(), "dtype": str(self.dtype)}
        header.update(meta or {})
        ndiff.save_arrays(path, arrays, header)

    @classmethod
    def load(cls, path, expect_variant: str | None = None) -> tuple["Model", dict]:
        arrays, meta = ndiff.load_arrays(path)
        spec = ModelSpec(**meta["spec"])
        if expect_variant is not None and spec.variant != expect_variant:
            raise ValueError(f"checkpoint holds a {spec.variant} model, expected {expect_variant}")
        extra = {k[6:]: v for k, v in arrays.items() if k.startswith("extra.")}
        params = {k: v for k, v in arrays.items() if not k.startswith("extra.")}
        expected = block_shapes(spec)
        for k, shape in expected.items():
            if k not in params or params[k].shape != shape:
                raise ValueError(f"checkpoint block {k} does not match spec shape {shape}")
        return cls(spec, params, extra), meta


def stl_forward(model: Model, x_seq):
    if model.spec.variant != "STL":
        raise ValueError("stl_forward needs an STL model")
    return model.forward(x_seq)


def multihead_forward(model: Model, x_seq, task_id: int):
    if model.spec.variant != "MultiH":
        raise ValueError("multihead_forward needs a MultiH model")
    return model.forward(x_seq, task_id)


def backbone_forward(model: Model, x_seq, task_ids=None):
    """Backbone features (B, T, fc_dims[2]) after any embedding combine."""
    _, cache = model.forward_cached(x_seq, task_ids)
    return cache.h3[0] if np.asarray(x_seq).ndim == 2 else cache.h3


def relu_signature(cache: ForwardCache) -> bytes:
    """Packed ReLU on/off pattern of a forward pass; identifies the linear region."""
    return b"".join(np.packbits(a > 0).tobytes() for a in (cache.a1, cache.a2, cache.a3))


def check_gradients(model: Model, x, target, mask, task_ids=None, eps: float = 1e-5,
                    per_block: int = 12, seed: int = 0) -> ndiff.GradCheckReport:
    """Finite-difference check of ``Model.backward`` under the masked MSE loss."""
    _, grads = model.loss_and_grads(x, target, mask, task_ids)

    def loss_fn(_params):
        pred, cache = model.forward_cached(x, task_ids)
        return masked_mse(pred, target, mask)[0], relu_signature(cache)

    trainables = model.all_trainables()
    return ndiff.grad_check(loss_fn, trainables, grads, eps=eps,
                            per_block=per_block, seed=seed)


# -- transfer adapters ------------------------------------------------------

def add_new_head(model: Model, seed: int) -> Model:
    """Copy of a MultiH model with a freshly initialised head for task C."""
    if model.spec.variant != "MultiH":
        raise ValueError("head finetuning needs a MultiH model")
    out = model.copy()
    d = model.spec.fc_dims[2]
    out.extra["new_head.W"] = ndiff.uniform_init(seed, "new_head.W", (3, d), d, model.dtype)
    out.extra["new_head.b"] = np.zeros(3, dtype=model.dtype)
    return out


def add_embedding_combo(model: Model, alpha=None) -> Model:
    """Copy of an embedding model with a new task ``alpha @ E``.

    ``alpha`` defaults to 1/C, the mean embedding. A zero start would be a
    dead point for MultE: the combined input is zero and every ReLU is off.
    """
    if not model.spec.embed_mode:
        raise ValueError("embedding finetuning needs an AddE/ConcatE/MultE model")
    out = model.copy()
    C = model.spec.n_tasks
    out.extra["alpha"] = (np.full(C, 1.0 / C, dtype=model.dtype) if alpha is None
                          else np.asarray(alpha, dtype=model.dtype).copy())
    return out


def finetune(model: Model, x, target, mask, epochs: int, lr: float = 0.001,
             batch: int = 12, seed: int = 0, full: bool = False,
             head_seed: int | None = None) -> tuple[Model, list[float]]:
    """Adapt a trained multi-task model to one new task.

    MultiH gets a new head; embedding variants learn coefficients over the
    existing task embeddings. With ``full=False`` only those new parameters
    move; everything else is bitwise frozen. The new task's id is
    ``model.spec.n_tasks``. ``x``, ``target`` and ``mask`` are batched
    (N, T, .) arrays of the new task's seasons.
    """
    if model.spec.variant == "MultiH":
        m = add_new_head(model, seed if head_seed is None else head_seed)
        new_blocks = {"new_head.W", "new_head.b"}
    else:
        m = add_embedding_combo(model)
        new_blocks = {"alpha"}
    task = model.spec.n_tasks
    n = x.shape[0]
    state = AdamState(lr=lr)
    rng = np.random.default_rng([seed, 17])
    losses = []

    if model.spec.variant == "MultiH" and not full:
        # Frozen backbone: features are fixed, only the linear head trains.
        _, cache = m.forward_cached(x, np.full(n, task))
        feats = cache.h3
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                W, b = m.extra["new_head.W"], m.extra["new_head.b"]
                pred = feats[idx] @ W.T + b
                loss, dpred = masked_mse(pred, target[idx], mask[idx])
                g = {
                    "new_head.W": np.einsum("btk,btd->kd", dpred, feats[idx]),
                    "new_head.b": dpred.sum(axis=(0, 1)),
                }
                adam_step(m.extra, g, state)
                losses.append(loss)
        return m, losses

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, grads = m.loss_and_grads(x[idx], target[idx], mask[idx], np.full(len(idx), task))
            losses.append(loss)
            # shared array objects: updating the merged view updates the model
            trainable = m.all_trainables()
            only = None if full else new_blocks
            adam_step(trainable, grads, state, only=only)
    return m, losses
