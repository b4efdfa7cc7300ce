import io

import numpy as np
import pytest

from dynagrasp.nn import AdamState, Layer, Net, adam_step, backward, forward, load_net, make_net, save_net


def _loss_and_grads(net, x, c):
    """Scalar loss L = c . y with analytic parameter gradients."""
    y, cache = forward(net, x)
    grads, dx = backward(net, cache, c)
    return float(c @ y), grads, dx


def test_identity_layer_passthrough():
    net = Net([Layer(np.eye(3), np.zeros(3), "identity")])
    x = np.array([1.0, -2.0, 0.5])
    y, _ = forward(net, x)
    assert np.array_equal(y, x)


def test_tanh_of_bias_with_zero_weights():
    b = np.array([0.3, -0.7])
    net = Net([Layer(np.zeros((2, 4)), b, "tanh")])
    y, _ = forward(net, np.ones(4))
    assert np.allclose(y, np.tanh(b), atol=1e-15)


def test_forward_matches_reimplementation():
    rng = np.random.default_rng(0)
    net = make_net((5, 7, 3), ("tanh", "identity"), rng)
    x = rng.normal(size=5)
    y, _ = forward(net, x)
    # independent straight-line reimplementation
    a = x
    for layer in net.layers:
        z = layer.W @ a + layer.b
        a = np.tanh(z) if layer.activation == "tanh" else (np.maximum(z, 0) if layer.activation == "relu" else z)
    assert np.allclose(y, a, atol=1e-12)


def test_forward_rejects_non_finite():
    net = make_net((2, 2), ("identity",), np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(net, np.array([1.0, np.nan]))


def test_batch_forward_matches_single():
    rng = np.random.default_rng(1)
    net = make_net((4, 6, 2), ("relu", "tanh"), rng)
    X = rng.normal(size=(5, 4))
    Y, _ = forward(net, X)
    for i in range(5):
        yi, _ = forward(net, X[i])
        assert np.allclose(Y[i], yi, atol=1e-15)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    net = make_net((4, 6, 5, 3), ("tanh", "relu", "identity"), rng)
    x = rng.normal(size=4)
    c = rng.normal(size=3)
    _, grads, _ = _loss_and_grads(net, x, c)
    params = net.parameters()
    h = 1e-5
    for p, g in zip(params, grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lp, _, _ = _loss_and_grads(net, x, c)
            p[idx] = orig - h
            lm, _, _ = _loss_and_grads(net, x, c)
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(g[idx]), 1e-8)
            assert abs(fd - g[idx]) / denom < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    net = make_net((3, 5, 2), ("tanh", "identity"), rng)
    x = rng.normal(size=3)
    c = rng.normal(size=2)
    _, _, dx = _loss_and_grads(net, x, c)
    h = 1e-6
    for j in range(3):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        lp, _, _ = _loss_and_grads(net, xp, c)
        lm, _, _ = _loss_and_grads(net, xm, c)
        fd = (lp - lm) / (2 * h)
        assert abs(fd - dx[j]) < 1e-6 * max(1.0, abs(fd))


def test_zero_upstream_gradient_gives_zero_grads():
    rng = np.random.default_rng(4)
    net = make_net((3, 4, 2), ("tanh", "tanh"), rng)
    _, cache = forward(net, rng.normal(size=3))
    grads, dx = backward(net, cache, np.zeros(2))
    assert all(np.all(g == 0) for g in grads)
    assert np.all(dx == 0)


def test_backward_linearity():
    rng = np.random.default_rng(5)
    net = make_net((3, 4, 2), ("tanh", "identity"), rng)
    _, cache = forward(net, rng.normal(size=3))
    dy = rng.normal(size=2)
    g1, _ = backward(net, cache, dy)
    g2, _ = backward(net, cache, 2.0 * dy)
    for a, b in zip(g1, g2):
        assert np.allclose(2.0 * a, b, atol=1e-15)


def test_adam_zero_grad_keeps_params():
    rng = np.random.default_rng(6)
    net = make_net((2, 3), ("identity",), rng)
    before = [p.copy() for p in net.parameters()]
    state = AdamState(lr=0.1)
    adam_step(net.parameters(), [np.zeros_like(p) for p in net.parameters()], state)
    for p, b in zip(net.parameters(), before):
        assert np.array_equal(p, b)
    assert state.step_count == 1


def test_adam_scalar_convergence():
    w = np.array([0.0])
    state = AdamState(lr=0.1)
    for _ in range(500):
        g = 2.0 * (w - 3.0)
        adam_step([w], [g], state)
    assert abs(w[0] - 3.0) < 1e-3
    assert state.step_count == 500


def test_serialization_roundtrip_bit_identical():
    rng = np.random.default_rng(7)
    net = make_net((6, 8, 3), ("tanh", "identity"), rng)
    buf = io.BytesIO()
    save_net(net, buf)
    buf.seek(0)
    net2 = load_net(buf)
    x = rng.normal(size=6)
    y1, _ = forward(net, x)
    y2, _ = forward(net2, x)
    assert np.array_equal(y1, y2)
    for a, b in zip(net.parameters(), net2.parameters()):
        assert np.array_equal(a, b)


def test_load_rejects_bad_magic():
    with pytest.raises(ValueError):
        load_net(io.BytesIO(b"NOTNET 1\n"))
