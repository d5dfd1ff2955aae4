import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchordet.tensor import (
    BufferArena,
    GradContractError,
    NonFiniteError,
    ShapeError,
    Tensor,
    abs_,
    add,
    clamp_min,
    concat,
    cos,
    div,
    exp,
    getitem,
    grad_check,
    inverse_sigmoid,
    layer_norm,
    linear,
    log,
    matmul,
    maximum,
    mean,
    mean_pool,
    minimum,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    sin,
    softmax,
    softplus,
    stack,
    sub,
    sum_,
    transpose,
)


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


# -- matmul -----------------------------------------------------------------


def test_matmul_identity():
    b = np.random.default_rng(0).normal(size=(3, 5))
    np.testing.assert_array_equal(matmul(t64(np.eye(3)), t64(b)).data, b)


def test_matmul_scalar_case():
    assert matmul(t64([[2.0]]), t64([[3.0]])).data.tolist() == [[6.0]]


def test_matmul_triple_loop_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    ref = np.zeros((4, 3))
    for i in range(4):
        for j in range(3):
            s = 0.0
            for k in range(5):
                s += a[i, k] * b[k, j]
            ref[i, j] = s
    np.testing.assert_allclose(matmul(t64(a), t64(b)).data, ref, rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        matmul(t64(np.zeros((2, 3))), t64(np.zeros((4, 5))))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.floats(-10, 10), st.integers(0, 2**32 - 1))
def test_matmul_scalar_associativity(m, k, n, c, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
    lhs = matmul(t64(c * a), t64(b)).data
    rhs = c * matmul(t64(a), t64(b)).data
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)


# -- softmax ----------------------------------------------------------------


def test_softmax_uniform_slice():
    np.testing.assert_allclose(softmax(t64(np.full(4, 3.7))).data, [0.25] * 4, atol=1e-15)


def test_softmax_closed_form():
    np.testing.assert_allclose(softmax(t64([0.0, math.log(2.0)])).data, [1 / 3, 2 / 3], atol=1e-15)


def test_softmax_large_inputs_do_not_overflow():
    np.testing.assert_array_equal(softmax(t64([1000.0, 1000.0])).data, [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=st.floats(-50, 50)),
       st.sampled_from([0, 1, -1]))
def test_softmax_slices_sum_to_one_fp64(x, axis):
    out = softmax(t64(x), axis=axis).data
    np.testing.assert_allclose(out.sum(axis=axis), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=st.floats(-50, 50, width=32)))
def test_softmax_slices_sum_to_one_fp32(x):
    out = softmax(Tensor(x), axis=-1).data
    assert out.dtype == np.float32
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


# -- mean_pool --------------------------------------------------------------


def test_mean_pool_constant():
    x = t64(np.full((3, 4, 2), 2.5))
    np.testing.assert_array_equal(mean_pool(x, "H").data, np.full((4, 2), 2.5))
    np.testing.assert_array_equal(mean_pool(x, "W").data, np.full((3, 2), 2.5))


def test_mean_pool_single_row_is_identity():
    x = np.random.default_rng(2).normal(size=(1, 5, 3))
    np.testing.assert_array_equal(mean_pool(t64(x), "H").data, x[0])


def test_mean_pool_loop_oracle():
    x = np.random.default_rng(3).normal(size=(3, 4, 2))
    over_h = np.zeros((4, 2))
    over_w = np.zeros((3, 2))
    for i in range(3):
        for j in range(4):
            over_h[j] += x[i, j] / 3
            over_w[i] += x[i, j] / 4
    np.testing.assert_allclose(mean_pool(t64(x), "H").data, over_h, atol=1e-12)
    np.testing.assert_allclose(mean_pool(t64(x), "W").data, over_w, atol=1e-12)


def test_mean_pool_rejects_bad_axis():
    x = t64(np.zeros((2, 3, 4)))
    with pytest.raises(ValueError):
        mean_pool(x, "C")
    with pytest.raises(np.exceptions.AxisError):
        mean_pool(x, 2)
    with pytest.raises(ShapeError):
        mean_pool(t64(np.zeros((2, 3))), "H")


# -- elementwise ------------------------------------------------------------


def test_sigmoid_and_inverse():
    assert sigmoid(t64(0.0)).item() == 0.5
    assert inverse_sigmoid(t64(0.5), 1e-5).item() == 0.0
    assert abs(sigmoid(inverse_sigmoid(t64(0.73))).item() - 0.73) < 1e-9


def test_inverse_sigmoid_clamps_endpoints():
    out = inverse_sigmoid(t64([0.0, 1.0]), 1e-5).data
    np.testing.assert_allclose(out, [math.log(1e-5 / (1 - 1e-5)), math.log((1 - 1e-5) / 1e-5)])


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 10))
def test_inverse_sigmoid_round_trip(x):
    assert abs(inverse_sigmoid(sigmoid(t64(x))).item() - x) < 1e-8


def test_add_mul_relu_broadcast():
    a = t64([[1.0, -2.0], [3.0, -4.0]])
    b = t64([10.0, 20.0])
    np.testing.assert_array_equal(add(a, b).data, [[11, 18], [13, 16]])
    np.testing.assert_array_equal(mul(a, b).data, [[10, -40], [30, -80]])
    np.testing.assert_array_equal(relu(a).data, [[1, 0], [3, 0]])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_result_raises():
    with pytest.raises(NonFiniteError):
        log(t64([0.0]))
    with pytest.raises(NonFiniteError):
        div(t64([1.0]), t64([0.0]))


# -- backward ---------------------------------------------------------------


def test_backward_of_sum_is_ones():
    x = t64(np.random.default_rng(4).normal(size=(3, 2)), grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 2)))


def test_backward_of_sum_of_squares():
    v = np.random.default_rng(5).normal(size=(4,))
    x = t64(v, grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, 2 * v, atol=1e-15)


def test_backward_requires_scalar():
    x = t64(np.ones(3), grad=True)
    with pytest.raises(GradContractError):
        (x * 2.0).backward()


def test_backward_is_deterministic():
    rng = np.random.default_rng(6)
    x = t64(rng.normal(size=(3, 4)), grad=True)
    w = t64(rng.normal(size=(4, 2)), grad=True)

    def loss():
        return (softmax(matmul(x, w), axis=-1) ** 2).sum()

    loss().backward()
    g1 = (x.grad.copy(), w.grad.copy())
    x.grad = w.grad = None
    loss().backward()
    np.testing.assert_array_equal(g1[0], x.grad)
    np.testing.assert_array_equal(g1[1], w.grad)


def test_gradients_accumulate_across_uses():
    x = t64([1.0, 2.0], grad=True)
    (x + x * 3.0).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 4.0])


def test_no_grad_builds_no_graph():
    x = t64([1.0], grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_composed_attention_graph_matches_finite_differences():
    rng = np.random.default_rng(7)
    q, k, v = (t64(rng.normal(size=s)) for s in [(3, 4), (5, 4), (5, 2)])

    def f(q, k, v):
        return (matmul(softmax(matmul(q, transpose(k)) / 2.0, axis=-1), v) ** 2).sum()

    assert grad_check(f, [q, k, v]) < 1e-4


# -- grad_check -------------------------------------------------------------


def test_grad_check_of_sum_is_exact():
    # sums of these inputs are exact in floating point, so the difference quotient is exactly 1
    assert grad_check(lambda a: a.sum(), t64(np.zeros((2, 3)))) == 0.0
    assert grad_check(lambda a: a.sum(), t64([[0.3711]])) == 0.0


def test_grad_check_of_sum_random_input():
    x = t64(np.random.default_rng(8).normal(size=(2, 3)))
    assert grad_check(lambda a: a.sum(), x) < 1e-9


def test_grad_check_softmax_sum_of_squares():
    x = t64(np.random.default_rng(9).normal(size=(2, 3)))
    assert grad_check(lambda a: (softmax(a, axis=-1) ** 2).sum(), x) < 1e-4


def test_grad_check_restores_inputs():
    v = np.random.default_rng(10).normal(size=(2, 2))
    x = t64(v.copy())
    grad_check(lambda a: (a ** 2).sum(), x)
    np.testing.assert_array_equal(x.data, v)
    assert x.grad is None and not x.requires_grad


UNARY_OPS = {
    "relu": lambda a: relu(a),
    "sigmoid": lambda a: sigmoid(a),
    "inverse_sigmoid": lambda a: inverse_sigmoid(sigmoid(a)),
    "exp": lambda a: exp(a),
    "log": lambda a: log(a * a + 1.0),
    "softplus": lambda a: softplus(a),
    "sin": lambda a: sin(a),
    "cos": lambda a: cos(a),
    "abs": lambda a: abs_(a),
    "power": lambda a: power(a * a + 1.0, 1.5),
    "clamp_min": lambda a: clamp_min(a, 0.1),
    "softmax0": lambda a: softmax(a, axis=0),
    "softmax1": lambda a: softmax(a, axis=-1),
    "mean_pool_h": lambda a: mean_pool(reshape(a, (1, 3, 4)), "H"),
    "mean_pool_w": lambda a: mean_pool(reshape(a, (3, 2, 2)), "W"),
    "mean": lambda a: mean(a, axis=0),
    "sum": lambda a: sum_(a, axis=1, keepdims=True),
    "transpose": lambda a: transpose(a),
    "getitem_slice": lambda a: a[1:, ::2],
    "getitem_fancy": lambda a: getitem(a, (np.array([0, 2, 0]), np.array([1, 1, 3]))),
}

BINARY_OPS = {
    "add": lambda a, b: add(a, b),
    "sub": lambda a, b: sub(a, b),
    "mul": lambda a, b: mul(a, b),
    "div": lambda a, b: div(a, b * b + 1.0),
    "maximum": lambda a, b: maximum(a, b),
    "minimum": lambda a, b: minimum(a, b),
    "matmul": lambda a, b: matmul(a, transpose(b)),
    "concat": lambda a, b: concat([a, b], axis=0),
    "stack": lambda a, b: stack([a, b], axis=1),
}


def _weighted(out, seed):
    # a fixed random projection makes every output element matter
    w = np.random.default_rng(seed).normal(size=out.shape)
    return (out * t64(w)).sum()


@pytest.mark.parametrize("name", sorted(UNARY_OPS))
def test_unary_op_gradients(name):
    rng = np.random.default_rng(sum(map(ord, name)))
    x = rng.normal(size=(3, 4))
    if name in ("relu", "abs", "clamp_min"):
        # keep clear of kinks
        x = np.where(np.abs(x - 0.1) < 0.05, x + 0.2, x)
        x = np.where(np.abs(x) < 0.05, x + 0.2, x)
    op = UNARY_OPS[name]
    assert grad_check(lambda a: _weighted(op(a), 0), t64(x)) < 1e-4


@pytest.mark.parametrize("name", sorted(BINARY_OPS))
def test_binary_op_gradients(name):
    rng = np.random.default_rng(len(name))
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    op = BINARY_OPS[name]
    assert grad_check(lambda x, y: _weighted(op(x, y), 1), [t64(a), t64(b)]) < 1e-4


def test_broadcast_gradients():
    rng = np.random.default_rng(11)
    a, b = t64(rng.normal(size=(2, 3, 4))), t64(rng.normal(size=(3, 1)))
    assert grad_check(lambda x, y: _weighted(x * y + y, 2), [a, b]) < 1e-4


def test_batched_matmul_and_linear_gradients():
    rng = np.random.default_rng(12)
    a, b = t64(rng.normal(size=(2, 3, 4))), t64(rng.normal(size=(4, 5)))
    assert grad_check(lambda x, y: _weighted(matmul(x, y), 3), [a, b]) < 1e-4
    x, w, bias = t64(rng.normal(size=(2, 3, 4))), t64(rng.normal(size=(5, 4))), t64(rng.normal(size=5))
    assert grad_check(lambda x, w, b: _weighted(linear(x, w, b), 4), [x, w, bias]) < 1e-4


def test_layer_norm_gradients():
    rng = np.random.default_rng(13)
    x, g, b = t64(rng.normal(size=(3, 6))), t64(rng.normal(size=6)), t64(rng.normal(size=6))
    assert grad_check(lambda x, g, b: _weighted(layer_norm(x, g, b), 5), [x, g, b]) < 1e-4


def test_linear_matches_matmul_plus_bias():
    rng = np.random.default_rng(14)
    x, w, b = rng.normal(size=(3, 4)), rng.normal(size=(2, 4)), rng.normal(size=2)
    np.testing.assert_allclose(linear(t64(x), t64(w), t64(b)).data, x @ w.T + b, atol=1e-12)


# -- buffer accounting ------------------------------------------------------


def test_arena_counts_owned_buffers_and_peak():
    x = t64(np.ones((10, 10)))
    with BufferArena() as arena:
        y = x * 2.0  # 800 bytes
        z = y + 1.0  # 800 more
        del y
        w = z * 3.0
    assert arena.peak == 1600
    del z, w


def test_arena_skips_views():
    x = t64(np.ones((10, 10)))
    with BufferArena() as arena:
        _ = reshape(x, (100,))
        _ = transpose(x)
    assert arena.peak == 0


def test_arena_refuses_nesting():
    with BufferArena():
        with pytest.raises(RuntimeError):
            with BufferArena():
                pass
