import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from coldhardy import kernels
from coldhardy.ndiff import (
    GRU_BLOCKS,
    AdamState,
    NumericError,
    ShapeError,
    adam_step,
    dense_backward,
    dense_forward,
    grad_check,
    gru_backward,
    gru_forward,
    gru_step,
    load_arrays,
    masked_mse,
    save_arrays,
    sigmoid,
    uniform_init,
)

try:
    kernels.get_gru_backend("cython")
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False


def gru_params(H, D, seed=0, scale=1.0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    p = {}
    for k in GRU_BLOCKS:
        shape = (H, D) if k.startswith("W") else (H, H) if k.startswith("U") else (H,)
        p[k] = (rng.uniform(-1, 1, shape) * scale).astype(dtype)
    return p


def zero_gru(H, D):
    return {k: np.zeros_like(v) for k, v in gru_params(H, D).items()}


# -- dense -------------------------------------------------------------------

def test_dense_examples():
    x = np.array([0.4, -1.5])
    assert np.array_equal(dense_forward(x, np.eye(2), np.zeros(2)), x)
    out = dense_forward(np.array([0.2, 0.3]), np.array([[1.0, 1.0]]), np.array([-1.0]), "relu")
    assert out.tolist() == [0.0]
    assert dense_forward(np.array([3.0]), np.array([[2.0]]), np.array([1.0])).tolist() == [7.0]


def test_dense_shape_error_mentions_shapes():
    with pytest.raises(ShapeError, match=r"\(3,\).*\(2, 2\)"):
        dense_forward(np.ones(3), np.eye(2), np.zeros(2))


def test_dense_backward_matches_finite_difference(rng):
    x = rng.normal(size=(4, 3))
    W, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    w_out = rng.normal(size=(4, 2))
    a = x @ W.T + b
    dx, dW, db = dense_backward(x, a, W, w_out, "relu")

    def loss(p):
        return float((dense_forward(x, p["W"], p["b"], "relu") * w_out).sum())

    rep = grad_check(loss, {"W": W, "b": b}, {"W": dW, "b": db}, per_block=6)
    assert rep.passed(1e-7)


# -- GRU ----------------------------------------------------------------------

def test_gru_zero_params_halves_state():
    h = np.array([0.8, -0.4, 2.0])
    assert np.array_equal(gru_step(np.ones(2), h, zero_gru(3, 2)), 0.5 * h)
    assert np.array_equal(gru_step(np.ones(2), np.zeros(3), zero_gru(3, 2)), np.zeros(3))


def test_gru_saturated_update_gate_keeps_state():
    p = gru_params(4, 3, seed=2)
    p["b_z"] = np.full(4, 40.0)
    h = np.array([0.3, -0.9, 0.5, 0.0])
    assert np.allclose(gru_step(np.ones(3), h, p), h, atol=1e-6)


@given(hnp.arrays(np.float64, 3, elements=st.floats(-5, 5)),
       hnp.arrays(np.float64, 4, elements=st.floats(-3, 3)), st.integers(0, 100))
def test_gru_step_bounded(x, h, seed):
    out = gru_step(x, h, gru_params(4, 3, seed=seed, scale=2.0))
    assert np.all(np.abs(out) <= np.maximum(np.abs(h), 1.0) + 1e-12)


def test_gru_shape_errors():
    p = gru_params(4, 3)
    with pytest.raises(ShapeError):
        gru_step(np.ones(2), np.zeros(4), p)
    with pytest.raises(ShapeError):
        gru_step(np.ones(3), np.zeros(5), p)


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_gru_forward_equals_stepping(backend, rng):
    if backend == "cython" and not HAVE_EXT:
        pytest.skip("compiled extension not built")
    fwd, bwd = kernels.get_gru_backend(backend)
    old = kernels.gru_scan_forward, kernels.gru_scan_backward
    kernels.gru_scan_forward, kernels.gru_scan_backward = fwd, bwd
    try:
        p = gru_params(5, 3, seed=1)
        x = rng.normal(size=(2, 7, 3))
        out, _ = gru_forward(x, p)
    finally:
        kernels.gru_scan_forward, kernels.gru_scan_backward = old
    h = np.zeros((2, 5))
    for t in range(7):
        h = gru_step(x[:, t], h, p)
        assert np.allclose(out[:, t], h, rtol=0, atol=1e-13)


def test_gru_single_step_hand_gradient(rng):
    p = gru_params(3, 2, seed=5)
    x = rng.normal(size=(1, 1, 2))
    w = rng.normal(size=(1, 1, 3))
    out, cache = gru_forward(x, p)
    dx, g = gru_backward(cache, w, p)
    xv, wv = x[0, 0], w[0, 0]
    z = sigmoid(p["W_z"] @ xv + p["b_z"])
    r = sigmoid(p["W_r"] @ xv + p["b_r"])
    n = np.tanh(p["W_n"] @ xv + p["b_n"] + r * p["b_hn"])
    dn = (1 - z) * wv * (1 - n ** 2)
    dz = -n * wv * z * (1 - z)
    dr = dn * p["b_hn"] * r * (1 - r)
    assert np.allclose(g["W_n"], np.outer(dn, xv), atol=1e-14)
    assert np.allclose(g["W_z"], np.outer(dz, xv), atol=1e-14)
    assert np.allclose(g["W_r"], np.outer(dr, xv), atol=1e-14)
    assert np.allclose(g["b_hn"], dn * r, atol=1e-14)
    assert np.array_equal(g["U_z"], np.zeros((3, 3)))  # h0 = 0
    assert np.allclose(dx[0, 0], p["W_n"].T @ dn + p["W_z"].T @ dz + p["W_r"].T @ dr, atol=1e-14)


def test_gru_backward_finite_difference(rng):
    p = gru_params(4, 3, seed=3, scale=0.7)
    x = rng.normal(size=(2, 6, 3))
    w = rng.normal(size=(2, 6, 4))
    _, cache = gru_forward(x, p)
    _, g = gru_backward(cache, w, p)

    def loss(params):
        return float((gru_forward(x, params)[0] * w).sum())

    assert grad_check(loss, p, g, per_block=8).passed(1e-6)


@pytest.mark.skipif(not HAVE_EXT, reason="compiled extension not built")
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
def test_gru_backends_agree(dtype, tol, rng):
    T, B, H = 9, 3, 6
    xp = rng.normal(size=(T, B, 3 * H)).astype(dtype)
    u_t = (rng.normal(size=(H, 3 * H)) * 0.4).astype(dtype)
    b_hn = rng.normal(size=H).astype(dtype)
    h0 = rng.normal(size=(B, H)).astype(dtype)
    dout = rng.normal(size=(T, B, H)).astype(dtype)
    res = {}
    for name in ("python", "cython"):
        fwd, bwd = kernels.get_gru_backend(name)
        out, z, r, n, u = fwd(xp, u_t, b_hn, h0)
        h_prev = np.concatenate([h0[None], out[:-1]])
        da, dan = bwd(dout, h_prev, z, r, n, u, np.ascontiguousarray(u_t.T))
        res[name] = (out, da, dan)
    for a, b in zip(res["python"], res["cython"]):
        assert a.dtype == dtype
        assert np.allclose(a, b, rtol=tol, atol=tol)


# -- loss ------------------------------------------------------------------------

def test_masked_mse_example():
    pred = np.array([[1.0], [2.0], [3.0]])
    target = np.array([[1.0], [0.0], [5.0]])
    mask = np.array([[True], [False], [True]])
    loss, grad = masked_mse(pred, target, mask)
    assert loss == 2.0
    assert grad[1, 0] == 0.0


def test_masked_mse_empty_and_perfect():
    x = np.ones((4, 3))
    assert masked_mse(x, x * 7, np.zeros((4, 3), bool)) == (0.0, pytest.approx(np.zeros((4, 3))))
    assert masked_mse(x, x, np.ones((4, 3), bool))[0] == 0.0


def test_masked_mse_batch_is_mean_of_sequences():
    p = np.array([[[1.0], [2.0]], [[0.0], [0.0]]])
    t = np.zeros_like(p)
    m = np.array([[[True], [True]], [[True], [False]]])
    assert masked_mse(p, t, m)[0] == pytest.approx(((1 + 4) / 2 + 0) / 2)


@given(hnp.arrays(np.float64, (2, 5, 3), elements=st.floats(-10, 10)),
       hnp.arrays(np.bool_, (2, 5, 3)),
       hnp.arrays(np.float64, (2, 5, 3), elements=st.floats(-1e3, 1e3)))
def test_masked_targets_do_not_matter(pred, mask, junk):
    target = np.full_like(pred, -4.0)
    l1, g1 = masked_mse(pred, target, mask)
    l2, g2 = masked_mse(pred, np.where(mask, target, junk), mask)
    assert l1 == l2 and np.array_equal(g1, g2)
    assert np.all(g1[~mask] == 0)


# -- Adam ------------------------------------------------------------------------

def test_adam_first_step():
    params = {"w": np.array([0.5])}
    state = AdamState(lr=0.001)
    adam_step(params, {"w": np.array([1.0])}, state)
    assert state.t == 1
    assert params["w"][0] == pytest.approx(0.5 - 0.001, abs=1e-9)


def test_adam_zero_gradient_fixed_point():
    params = {"w": np.array([0.5, -2.0])}
    adam_step(params, {"w": np.zeros(2)}, AdamState())
    assert params["w"].tolist() == [0.5, -2.0]


@given(hnp.arrays(np.float64, 5, elements=st.floats(-1e3, 1e3)))
def test_adam_sign_symmetry_and_determinism(g):
    a, b, c = ({"w": np.zeros(5)} for _ in range(3))
    adam_step(a, {"w": g}, AdamState())
    adam_step(b, {"w": -g}, AdamState())
    adam_step(c, {"w": g}, AdamState())
    assert np.array_equal(a["w"], -b["w"])
    assert np.array_equal(a["w"], c["w"])


def test_adam_non_finite_gradient_names_block():
    params = {"ok": np.zeros(2), "bad": np.zeros(2)}
    with pytest.raises(NumericError, match="bad"):
        adam_step(params, {"ok": np.zeros(2), "bad": np.array([0.0, np.nan])}, AdamState())


def test_adam_only_restricts_updates():
    params = {"a": np.zeros(2), "b": np.zeros(2)}
    adam_step(params, {"a": np.ones(2), "b": np.ones(2)}, AdamState(), only={"b"})
    assert np.all(params["a"] == 0) and np.all(params["b"] != 0)


# -- gradient checker ------------------------------------------------------------

def test_grad_check_linear_quadratic_exact(rng):
    A = rng.normal(size=(6, 4))
    y = rng.normal(size=6)
    w = rng.normal(size=4)

    def loss(p):
        r = A @ p["w"] - y
        return float(r @ r)

    grad = {"w": 2 * A.T @ (A @ w - y)}
    assert grad_check(loss, {"w": w}, grad).max_rel_error < 1e-8


def test_grad_check_names_corrupted_block(rng):
    p = gru_params(4, 3, seed=8)
    x = rng.normal(size=(1, 5, 3))
    w = rng.normal(size=(1, 5, 4))
    _, cache = gru_forward(x, p)
    _, g = gru_backward(cache, w, p)
    g = dict(g, U_r=g["U_r"] * 2)
    rep = grad_check(lambda q: float((gru_forward(x, q)[0] * w).sum()), p, g)
    assert not rep.passed(1e-4)
    assert rep.worst_block == "U_r"


def test_grad_check_skips_kinks():
    params = {"w": np.array([0.0])}

    def loss(p):
        v = p["w"][0]
        return abs(v), v > 0

    rep = grad_check(loss, params, {"w": np.array([0.0])})
    assert rep.n_kinks == 1 and rep.n_checked == 0


# -- init and checkpoints -----------------------------------------------------------

def test_uniform_init_bounds_and_independence():
    a = uniform_init(3, "fc1.W", (50, 16), 16)
    assert np.all(np.abs(a) <= 0.25)
    assert np.array_equal(a, uniform_init(3, "fc1.W", (50, 16), 16))
    assert not np.array_equal(a, uniform_init(3, "fc2.W", (50, 16), 16))


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5).astype(np.float32)}
    save_arrays(tmp_path / "x.ckpt", arrays, {"note": "hi"})
    back, meta = load_arrays(tmp_path / "x.ckpt")
    assert meta["note"] == "hi"
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype and np.array_equal(back[k], arrays[k])


def test_checkpoint_version_checked(tmp_path):
    save_arrays(tmp_path / "x.ckpt", {"a": np.ones(2)}, {"version_override": 1})
    import io
    import json
    with np.load(tmp_path / "x.ckpt") as data:
        payload = {k: data[k] for k in data.files}
    meta = json.loads(bytes(payload["__meta__"]).decode())
    meta["version"] = 99
    payload["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    (tmp_path / "y.ckpt").write_bytes(buf.getvalue())
    with pytest.raises(ValueError, match="version"):
        load_arrays(tmp_path / "y.ckpt")
