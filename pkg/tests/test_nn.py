import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feddrive import nn
from feddrive.container import ContainerError, load_container, save_container


def small_net(seed=0, sizes=(6, 8, 1), acts=("relu", "tanh")):
    return nn.init_params(list(sizes), list(acts), seed=seed)


# --------------------------------------------------------------------- init


def test_init_deterministic():
    a = nn.init_params([6, 400, 300, 1], ["relu", "relu", "tanh"], seed=5)
    b = nn.init_params([6, 400, 300, 1], ["relu", "relu", "tanh"], seed=5)
    assert np.array_equal(nn.flatten_params(a), nn.flatten_params(b))
    c = nn.init_params([6, 400, 300, 1], ["relu", "relu", "tanh"], seed=6)
    assert not np.array_equal(nn.flatten_params(a), nn.flatten_params(c))


def test_init_biases_zero():
    p = nn.init_params([2, 3], ["identity"], seed=0)
    assert np.array_equal(p.layers[0].bias, np.zeros(3))


def test_init_weight_bounds():
    p = nn.init_params([16, 8], ["relu"], seed=1)
    assert np.all(np.abs(p.layers[0].weights) <= 1.0 / 4.0)


def test_default_architecture_param_count():
    # 6*400+400 + 400*300+300 + 300*1+1
    p = nn.init_params([6, 400, 300, 1], ["relu", "relu", "tanh"], seed=0)
    assert p.param_count == 123_401
    assert nn.flatten_params(p).shape == (123_401,)
    assert p.layer_sizes == (6, 400, 300, 1)


@pytest.mark.parametrize(
    "sizes,acts",
    [([6], ["relu"]), ([6, 4], ["relu", "tanh"]), ([6, 4], ["softplus"])],
)
def test_init_validation(sizes, acts):
    with pytest.raises(ValueError):
        nn.init_params(sizes, acts, seed=0)


# ------------------------------------------------------------------ forward


def test_forward_zero_net():
    p = small_net(sizes=(3, 2), acts=("identity",))
    zero = nn.unflatten_params(p, np.zeros(p.param_count))
    y, _ = nn.forward(zero, np.ones((4, 3)))
    assert np.array_equal(y, np.zeros((4, 2)))


def test_forward_affine_identity():
    p = nn.MlpParams(
        layers=(nn.LayerParams(weights=np.array([[2.0]]), bias=np.array([1.0])),),
        activations=("identity",),
    )
    y, _ = nn.forward(p, np.array([[3.0]]))
    assert y[0, 0] == 7.0


def test_forward_relu():
    p = nn.MlpParams(
        layers=(nn.LayerParams(weights=np.eye(2), bias=np.zeros(2)),),
        activations=("relu",),
    )
    y, _ = nn.forward(p, np.array([[-1.0, 2.0]]))
    assert np.array_equal(y, np.array([[0.0, 2.0]]))


def test_forward_width_mismatch():
    with pytest.raises(ValueError, match="shape"):
        nn.forward(small_net(), np.ones((2, 5)))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_tanh_head_bounded(seed):
    p = small_net(seed=seed)
    rng = np.random.default_rng(seed)
    y, _ = nn.forward(p, rng.normal(scale=10.0, size=(8, 6)))
    assert np.all(np.abs(y) <= 1.0)


# ----------------------------------------------------------------- backward


def fd_gradient(params, x, g_out, h=1e-5):
    """Central finite differences of sum(forward(params, x) * g_out)."""
    flat = nn.flatten_params(params)
    out = np.zeros_like(flat)
    for i in range(len(flat)):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        yu, _ = nn.forward(nn.unflatten_params(params, up), x)
        yd, _ = nn.forward(nn.unflatten_params(params, dn), x)
        out[i] = float(((yu - yd) * g_out).sum()) / (2 * h)
    return out


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


@pytest.mark.parametrize(
    "sizes,acts",
    [
        ((6, 8, 1), ("relu", "tanh")),
        ((7, 5, 1), ("relu", "identity")),  # critic-style concatenated input width
        ((4, 6, 3), ("tanh", "identity")),
    ],
)
def test_gradient_check(sizes, acts):
    p = small_net(seed=11, sizes=sizes, acts=acts)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(5, sizes[0]))
    g_out = rng.normal(size=(5, sizes[-1]))
    _, cache = nn.forward(p, x)
    grads, _ = nn.backward(p, cache, g_out)
    assert np.max(rel_err(nn.flatten_layers(grads), fd_gradient(p, x, g_out))) < 1e-4


def test_backward_zero_output_gradient():
    p = small_net()
    x = np.random.default_rng(0).normal(size=(3, 6))
    _, cache = nn.forward(p, x)
    grads, g_in = nn.backward(p, cache, np.zeros((3, 1)))
    assert np.array_equal(nn.flatten_layers(grads), np.zeros(p.param_count))
    assert np.array_equal(g_in, np.zeros((3, 6)))


def test_backward_identity_closed_form():
    # single identity layer: dL/dW = g x^T, dL/db = g
    p = nn.MlpParams(
        layers=(nn.LayerParams(weights=np.zeros((2, 3)), bias=np.zeros(2)),),
        activations=("identity",),
    )
    x = np.array([[1.0, 2.0, 3.0]])
    g = np.array([[4.0, 5.0]])
    _, cache = nn.forward(p, x)
    grads, g_in = nn.backward(p, cache, g)
    assert np.array_equal(grads[0].weights, g.T @ x)
    assert np.array_equal(grads[0].bias, g[0])
    assert np.array_equal(g_in, g @ p.layers[0].weights)


def test_backward_input_gradient_vs_fd():
    p = small_net(seed=3, sizes=(4, 5, 2), acts=("tanh", "identity"))
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 4))
    g_out = rng.normal(size=(3, 2))
    _, cache = nn.forward(p, x)
    _, g_in = nn.backward(p, cache, g_out)
    h = 1e-6
    fd = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            up, dn = x.copy(), x.copy()
            up[i, j] += h
            dn[i, j] -= h
            yu, _ = nn.forward(p, up)
            yd, _ = nn.forward(p, dn)
            fd[i, j] = float(((yu - yd) * g_out).sum()) / (2 * h)
    assert np.max(rel_err(g_in, fd)) < 1e-4


# --------------------------------------------------------------------- adam


def test_adam_zero_gradient_noop():
    p = small_net()
    state = nn.init_adam(p)
    zero = nn.unflatten_params(p, np.zeros(p.param_count)).layers
    p2, state2 = nn.adam_step(p, zero, state, lr=0.1)
    assert np.array_equal(nn.flatten_params(p), nn.flatten_params(p2))
    assert state2.t == 1


def test_adam_sign_step_with_zero_betas():
    p = nn.MlpParams(
        layers=(nn.LayerParams(weights=np.array([[1.0]]), bias=np.array([2.0])),),
        activations=("identity",),
    )
    g = (nn.LayerParams(weights=np.array([[0.5]]), bias=np.array([-3.0])),)
    state = nn.AdamState(m=np.zeros(2), v=np.zeros(2), t=0, beta1=0.0, beta2=0.0, eps=1e-8)
    p2, _ = nn.adam_step(p, g, state, lr=0.1)
    got = nn.flatten_params(p2)
    want = np.array([1.0, 2.0]) - 0.1 * np.array([0.5, -3.0]) / (np.array([0.5, 3.0]) + 1e-8)
    assert np.allclose(got, want, rtol=0, atol=1e-15)


def test_adam_two_steps_match_hand_recurrence():
    # scalar parameter, constant gradient, default betas
    beta1, beta2, eps, lr, g = 0.9, 0.999, 1e-8, 0.01, 0.7
    theta, m, v = 1.5, 0.0, 0.0
    for t in (1, 2):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        theta -= lr * (m / (1 - beta1**t)) / (np.sqrt(v / (1 - beta2**t)) + eps)

    p = nn.MlpParams(
        layers=(nn.LayerParams(weights=np.array([[1.5]]), bias=np.zeros(1)),),
        activations=("identity",),
    )
    grads = (nn.LayerParams(weights=np.array([[g]]), bias=np.zeros(1)),)
    state = nn.init_adam(p)
    for _ in range(2):
        p, state = nn.adam_step(p, grads, state, lr=lr)
    assert p.layers[0].weights[0, 0] == pytest.approx(theta, abs=1e-15)
    assert state.t == 2


def test_adam_rejects_non_finite_gradient():
    p = small_net()
    bad = nn.unflatten_params(p, np.full(p.param_count, np.nan)).layers
    with pytest.raises(ValueError, match="non-finite"):
        nn.adam_step(p, bad, nn.init_adam(p), lr=0.1)


# -------------------------------------------------------- flatten/unflatten


@given(st.integers(0, 2**32 - 1), st.sampled_from([(3, 4, 2), (6, 8, 8, 1), (2, 2)]))
@settings(max_examples=30, deadline=None)
def test_flatten_roundtrip(seed, sizes):
    acts = ["relu"] * (len(sizes) - 2) + ["tanh"]
    p = nn.init_params(list(sizes), acts, seed=seed)
    q = nn.unflatten_params(p, nn.flatten_params(p))
    assert np.array_equal(nn.flatten_params(p), nn.flatten_params(q))
    for a, b in zip(p.layers, q.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)


def test_unflatten_wrong_length():
    p = small_net()
    with pytest.raises(ValueError, match="length"):
        nn.unflatten_params(p, np.zeros(p.param_count + 1))


def test_flatten_order_stable():
    p = nn.MlpParams(
        layers=(
            nn.LayerParams(weights=np.array([[1.0, 2.0], [3.0, 4.0]]), bias=np.array([5.0, 6.0])),
            nn.LayerParams(weights=np.array([[7.0, 8.0]]), bias=np.array([9.0])),
        ),
        activations=("relu", "identity"),
    )
    assert np.array_equal(nn.flatten_params(p), np.arange(1.0, 10.0))


# -------------------------------------------------------------- checkpoints


def test_mlp_checkpoint_roundtrip(tmp_path):
    p = small_net(seed=9)
    adam = nn.AdamState(m=np.arange(p.param_count, dtype=float), v=np.ones(p.param_count), t=7)
    path = tmp_path / "net.ckpt"
    nn.save_mlp(path, p, adam)
    q, adam2, meta = nn.load_mlp(path)
    assert np.array_equal(nn.flatten_params(p), nn.flatten_params(q))
    assert q.activations == p.activations
    assert adam2.t == 7
    assert np.array_equal(adam2.m, adam.m)
    assert meta["kind"] == "mlp"


def test_checkpoint_bytes_deterministic(tmp_path):
    p = small_net(seed=2)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    nn.save_mlp(a, p)
    nn.save_mlp(b, p)
    assert a.read_bytes() == b.read_bytes()


def test_truncated_checkpoint_rejected(tmp_path):
    path = tmp_path / "net.ckpt"
    nn.save_mlp(path, small_net())
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 40])
    with pytest.raises(ContainerError, match="truncated"):
        nn.load_mlp(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "net.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ContainerError, match="magic"):
        load_container(path)


def test_unsupported_version_rejected(tmp_path):
    import json
    import struct

    path = tmp_path / "net.ckpt"
    header = json.dumps({"format_version": 99, "arrays": [], "meta": {}}).encode()
    path.write_bytes(b"FDCKPT1\n" + struct.pack("<I", len(header)) + header)
    with pytest.raises(ContainerError, match="version"):
        load_container(path)


def test_container_roundtrip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1, 2, 3], dtype=np.int64)}
    meta = {"note": "hello", "n": 3}
    path = tmp_path / "c.ckpt"
    save_container(path, arrays, meta)
    arrays2, meta2 = load_container(path)
    assert meta2 == meta
    assert np.array_equal(arrays2["a"], arrays["a"])
    assert arrays2["b"].dtype == np.int64
