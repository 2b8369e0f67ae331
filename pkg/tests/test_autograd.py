import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shotmem import checkpoint
from shotmem.autograd import (
    NumericError,
    OpGraph,
    ShapeError,
    StateError,
    Tensor,
    backward,
    finite_diff,
    ops,
    rel_error,
)

TOL = 1e-6


def _leaf(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def _check(fn, leaves, rng):
    # random weights avoid the trivial zero gradient of e.g. sum(softmax)
    w = rng.normal(size=fn(*leaves).shape)

    def loss(*_):
        return ops.mean(ops.mul(fn(*leaves), w))

    for t in leaves:
        t.grad = None
    backward(loss())
    for t in leaves:
        num = finite_diff(loss, t, 1e-5)
        assert rel_error(t.grad, num) < TOL, (fn, t.shape)


def test_matmul_identity():
    a = np.arange(9.0).reshape(3, 3)
    out = ops.matmul(Tensor(np.eye(3)), Tensor(a))
    np.testing.assert_array_equal(out.data, a)


def test_softmax_uniform():
    out = ops.softmax(Tensor(np.zeros(4)))
    np.testing.assert_allclose(out.data, [0.25] * 4, atol=0)


def test_layer_norm_constant_vector_is_zero():
    out = ops.layer_norm(Tensor(np.full(6, 3.7)))
    np.testing.assert_allclose(out.data, np.zeros(6), atol=1e-12)


def test_mse_gradient_zero_at_target():
    x0 = np.random.default_rng(0).normal(size=(3, 4))
    x = Tensor(x0.copy(), requires_grad=True)
    backward(ops.mse(x, x0))
    np.testing.assert_array_equal(x.grad, np.zeros_like(x0))


def test_sum_of_softmax_has_zero_gradient():
    v = Tensor(np.random.default_rng(1).normal(size=7), requires_grad=True)
    backward(ops.sum(ops.softmax(v)))
    np.testing.assert_allclose(v.grad, 0.0, atol=1e-15)


def test_finite_diff_square():
    x = Tensor([3.0], requires_grad=True)
    g = finite_diff(lambda t: (t * t).item(), x, 1e-5)
    assert abs(g[0] - 6.0) < 1e-8


def test_finite_diff_constant_is_zero():
    x = Tensor(np.ones((2, 3)))
    np.testing.assert_array_equal(finite_diff(lambda t: 4.2, x, 1e-5), np.zeros((2, 3)))


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ValueError):
        finite_diff(lambda t: 0.0, Tensor([1.0]), 0.0)


def test_gradients_accumulate_across_backward_calls():
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(ops.sum(ops.mul(x, x)))
    first = x.grad.copy()
    backward(ops.sum(ops.mul(x, x)))
    np.testing.assert_allclose(x.grad, 2 * first)
    x.zero_grad()
    assert x.grad is None


def test_backward_without_graph_is_state_error():
    with pytest.raises(StateError):
        backward(Tensor([1.0]))


def test_opgraph_backward_before_forward():
    g = OpGraph(lambda x: ops.sum(ops.tanh(x)), name="tanh-sum")
    with pytest.raises(StateError, match="before forward"):
        g.backward()
    x = Tensor([0.3, -0.2], requires_grad=True)
    g.forward(x=x)
    grads = g.backward()
    np.testing.assert_allclose(grads["x"], 1 - np.tanh([0.3, -0.2]) ** 2)


def test_shape_error_names_node():
    with pytest.raises(ShapeError) as err:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert err.value.node == "matmul"
    with pytest.raises(ShapeError, match="linear"):
        ops.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_non_finite_is_numeric_error():
    with pytest.raises(NumericError):
        Tensor([np.nan])
    big = Tensor([1e308])
    with pytest.raises(NumericError):
        ops.mul(big, big)


def test_attention_single_key_returns_value():
    rng = np.random.default_rng(2)
    q = Tensor(rng.normal(size=(5, 4)))
    k = Tensor(rng.normal(size=(1, 4)))
    v = Tensor(rng.normal(size=(1, 3)))
    out = ops.attention(q, k, v)
    np.testing.assert_array_equal(out.data, np.repeat(v.data, 5, axis=0))


def test_attention_fully_masked_row_is_zero():
    rng = np.random.default_rng(3)
    q = Tensor(rng.normal(size=(2, 4)))
    k = Tensor(rng.normal(size=(3, 4)))
    v = Tensor(rng.normal(size=(3, 2)))
    mask = np.array([[True, False, True], [False, False, False]])
    out = ops.attention(q, k, v, mask)
    np.testing.assert_array_equal(out.data[1], 0.0)


def test_forward_is_bit_deterministic():
    rng = np.random.default_rng(4)
    q, k, v = (Tensor(rng.normal(size=(2, 5, 8))) for _ in range(3))
    a = ops.layer_norm(ops.attention(q, k, v)).data
    b = ops.layer_norm(ops.attention(q, k, v)).data
    assert a.tobytes() == b.tobytes()


shape_dim = st.integers(1, 8)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), shape_dim, shape_dim)
def test_softmax_rows_sum_to_one(seed, n, m):
    x = np.random.default_rng(seed).normal(size=(n, m)) * 5
    y = ops.softmax(Tensor(x)).data
    assert (y >= 0).all()
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), shape_dim, shape_dim, shape_dim)
def test_grad_pointwise(seed, a, b, c):
    rng = np.random.default_rng(seed)
    x, y = _leaf(rng, (a, b, c)), _leaf(rng, (b, 1))
    _check(lambda x, y: ops.mul(ops.tanh(ops.add(x, y)), ops.sub(x, y)), [x, y], rng)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), shape_dim, shape_dim, shape_dim)
def test_grad_matmul_and_linear(seed, n, k, m):
    rng = np.random.default_rng(seed)
    x, w, b = _leaf(rng, (2, n, k)), _leaf(rng, (k, m)), _leaf(rng, (m,))
    _check(lambda x, w, b: ops.linear(x, w, b), [x, w, b], rng)
    y = _leaf(rng, (k, m))
    _check(lambda x, y: ops.matmul(x, y), [x, y], rng)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), shape_dim, shape_dim)
def test_grad_softmax_and_layer_norm(seed, n, m):
    rng = np.random.default_rng(seed)
    x = _leaf(rng, (n, m + 1))
    _check(ops.softmax, [x], rng)
    # two features normalise to exactly ±1, leaving only eps-sized gradients
    x = _leaf(rng, (n, max(m, 3)))
    _check(ops.layer_norm, [x], rng)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), shape_dim, shape_dim, shape_dim, st.booleans())
def test_grad_attention(seed, lq, lk, d, masked):
    rng = np.random.default_rng(seed)
    q, k, v = _leaf(rng, (2, lq, d)), _leaf(rng, (2, lk, d)), _leaf(rng, (2, lk, 3))
    mask = None
    if masked:
        mask = rng.random((2, 1, lk)) < 0.7
        mask[..., 0] = True
    _check(lambda q, k, v: ops.attention(q, k, v, mask), [q, k, v], rng)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]), st.integers(1, 2), st.integers(1, 4))
def test_grad_pool_patchify_mean(seed, k, mult, c):
    rng = np.random.default_rng(seed)
    h = k * mult * (2 if k < 4 else 1)
    x = _leaf(rng, (2, h, h, c))
    _check(lambda x: ops.avg_pool2d(x, k), [x], rng)
    _check(lambda x: ops.patchify(x, k), [x], rng)
    _check(lambda x: ops.mean(x, axis=(1, 2)), [x], rng)
    _check(lambda x: ops.mean(x, axis=-1, keepdims=True), [x], rng)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), shape_dim, shape_dim)
def test_grad_mse_and_structural(seed, n, m):
    rng = np.random.default_rng(seed)
    x, y = _leaf(rng, (n, m)), _leaf(rng, (n, m))
    for t in (x, y):
        t.grad = None
    backward(ops.mse(x, y))
    for t in (x, y):
        num = finite_diff(lambda _: ops.mse(x, y), t)
        assert rel_error(t.grad, num) < TOL
    idx = rng.integers(0, n, size=(3,))
    _check(lambda x, y: ops.concat([ops.take(x, idx, axis=0), ops.transpose(y, (0, 1))], axis=0), [x, y], rng)
    _check(lambda x: ops.reshape(x, (m, n)), [x], rng)
    rows = rng.integers(0, m, size=(n, 2))
    _check(lambda x: ops.gather_rows(ops.reshape(x, (n, m, 1)), rows), [x], rng)


def test_patchify_layout():
    x = np.arange(4 * 4 * 2, dtype=float).reshape(4, 4, 2)
    p = ops.patchify(Tensor(x), 2).data
    assert p.shape == (4, 8)
    np.testing.assert_array_equal(p[1], x[0:2, 2:4].reshape(-1))


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    tensors = {"a": rng.normal(size=(2, 3)), "b.c": np.array(3.5), "é": rng.normal(size=(1, 2, 2))}
    path = tmp_path / "x.bin"
    checkpoint.save(path, tensors)
    raw = path.read_bytes()
    assert raw[:4] == b"OSTY"
    back = checkpoint.load(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == np.shape(tensors[k])
        assert back[k].tobytes() == np.asarray(tensors[k], dtype=float).tobytes()
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(raw[:-3])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"XXXX" + raw[4:])
