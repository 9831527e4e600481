import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from asvaet.autodiff import (GradientCheckError, ShapeError, Tape, Tensor, backward,
                             finite_difference_check, no_grad, ops)
from asvaet.autodiff import _pykernels, kernels

RNG = np.random.default_rng(1234)


def leaf(*shape, low=-1.0, high=1.0):
    return Tensor(RNG.uniform(low, high, size=shape), requires_grad=True)


def weighted_sum(out):
    # random weights keep the gradient from being a trivial all-ones pattern
    w = np.random.default_rng(out.data.size).uniform(-1, 1, size=out.shape)
    return ops.sum(ops.multiply(out, Tensor(w)))


# -- forward examples -------------------------------------------------------

def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ops.matmul(Tensor(np.eye(2)), a).data, a.data)


def test_softmax_of_zeros_is_uniform():
    np.testing.assert_allclose(ops.softmax(Tensor(np.zeros((1, 3)))).data, [[1 / 3] * 3], atol=1e-15)


def test_layer_norm_hand_value():
    # mean 3, population std 1
    out = ops.layer_norm(Tensor([[2.0, 4.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-5)


def test_softmax_rows_sum_to_one():
    y = ops.softmax(Tensor(RNG.normal(size=(7, 5)) * 10))
    np.testing.assert_allclose(y.data.sum(-1), 1.0, atol=1e-12)


def test_masked_fill_gives_zero_weight():
    scores = Tensor(RNG.normal(size=(4, 6)))
    mask = np.zeros((4, 6), dtype=bool)
    mask[:, 2:4] = True
    w = ops.softmax(ops.masked_fill(scores, mask))
    assert np.abs(w.data[mask]).max() < 1e-12
    np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-12)


# -- backward examples ------------------------------------------------------

def test_grad_of_sum_is_ones():
    x = Tensor(np.array([0.3, -1.0, 2.0]), requires_grad=True)
    with Tape():
        backward(ops.sum(x))
    np.testing.assert_array_equal(x.grad, np.ones(3))


def test_grad_of_tanh_at_zero():
    x = Tensor(np.zeros(4), requires_grad=True)
    with Tape():
        backward(ops.sum(ops.tanh(x)))
    np.testing.assert_array_equal(x.grad, np.ones(4))


def test_grad_of_softmax_sum_vanishes():
    x = leaf(3, 5)
    with Tape():
        backward(ops.sum(ops.softmax(x)))
    assert np.abs(x.grad).max() < 1e-15


def test_reused_tensor_accumulates_exactly():
    x = leaf(2, 3)
    with Tape():
        backward(ops.sum(ops.tanh(x)))
    g_f = x.grad.copy()
    x.grad = None
    with Tape():
        backward(ops.sum(ops.exp(x)))
    g_g = x.grad.copy()
    x.grad = None
    with Tape():
        backward(ops.add(ops.sum(ops.tanh(x)), ops.sum(ops.exp(x))))
    np.testing.assert_array_equal(x.grad, g_f + g_g)


def test_non_scalar_loss_rejected():
    x = leaf(3)
    with Tape():
        y = ops.tanh(x)
        with pytest.raises(ShapeError):
            backward(y)


def test_untaped_loss_rejected():
    with pytest.raises(ValueError):
        backward(Tensor(1.0))


def test_no_grad_records_nothing():
    x = leaf(3)
    with Tape() as tape:
        with no_grad():
            ops.tanh(x)
        assert len(tape) == 0
        ops.tanh(x)
        assert len(tape) == 1


def test_backward_visits_in_reverse_order():
    x = leaf(3)
    seen = []
    with Tape() as tape:
        a = ops.tanh(x)
        b = ops.exp(a)
        loss = ops.sum(b)
        for node in tape.nodes:
            inner = node.vjp
            node.vjp = (lambda f, name: (lambda g: (seen.append(name), f(g))[1]))(inner, node.op)
        backward(loss)
    assert seen == ["sum", "exp", "tanh"]


def test_replay_is_bit_identical():
    def run():
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        with Tape():
            loss = ops.sum(ops.dropout(ops.tanh(ops.matmul(x, x)), 0.3, rng))
            backward(loss)
        return loss.item(), x.grad
    (l1, g1), (l2, g2) = run(), run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)


# -- errors -----------------------------------------------------------------

def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_softmax_and_log_reject_non_finite(bad):
    with pytest.raises(FloatingPointError):
        ops.softmax(Tensor([[0.0, bad]]))
    with pytest.raises(FloatingPointError):
        ops.log_softmax(Tensor([[0.0, bad]]))
    with pytest.raises(FloatingPointError):
        ops.log(Tensor([1.0, bad]))


def test_log_rejects_non_positive():
    with pytest.raises(FloatingPointError):
        ops.log(Tensor([1.0, 0.0]))


def test_embedding_lookup_range_checked():
    with pytest.raises(IndexError):
        ops.embedding_lookup(Tensor(np.ones((3, 2))), np.array([0, 3]))


# -- per-primitive gradient checks -------------------------------------------

def _cases():
    mask = RNG.random((3, 4)) < 0.4
    mask[:, 0] = False
    return {
        "add_broadcast": (lambda a, b: ops.add(a, b), [(3, 4), (4,)]),
        "multiply_broadcast": (lambda a, b: ops.multiply(a, b), [(3, 4), (3, 1)]),
        "scale": (lambda a: ops.scale(a, -2.5), [(3, 4)]),
        "matmul": (lambda a, b: ops.matmul(a, b), [(3, 4), (4, 2)]),
        "matmul_batched": (lambda a, b: ops.matmul(a, b), [(2, 3, 4), (2, 4, 5)]),
        "matmul_shared_weight": (lambda a, b: ops.matmul(a, b), [(2, 3, 4), (4, 5)]),
        "concat": (lambda a, b: ops.concat([a, b], axis=-1), [(3, 2), (3, 4)]),
        "tanh": (ops.tanh, [(3, 4)]),
        "exp": (ops.exp, [(3, 4)]),
        "log": (ops.log, [("pos", 3, 4)]),
        "softmax": (ops.softmax, [(3, 4)]),
        "log_softmax": (ops.log_softmax, [(3, 4)]),
        "layer_norm": (lambda a, g, b: ops.layer_norm(a, g, b), [(3, 5), (5,), (5,)]),
        "embedding_lookup": (lambda t: ops.embedding_lookup(t, np.array([[0, 2, 2], [1, 0, 3]])), [(4, 3)]),
        "sum_axis": (lambda a: ops.sum(a, axis=1), [(3, 4)]),
        "mean_axis": (lambda a: ops.mean(a, axis=0), [(3, 4)]),
        "masked_fill": (lambda a: ops.softmax(ops.masked_fill(a, mask)), [(3, 4)]),
        "reshape": (lambda a: ops.tanh(ops.reshape(a, (4, 3))), [(3, 4)]),
        "transpose": (lambda a: ops.transpose(a, (1, 0)), [(3, 4)]),
        "slice_basic": (lambda a: a[1:, ::2], [(3, 4)]),
        "slice_advanced": (lambda a: a[np.array([0, 2, 0])], [(3, 4)]),
        "pick": (lambda a: ops.pick(a, np.array([1, 0, 3])), [(3, 4)]),
        "sigmoid": (ops.sigmoid, [(3, 4)]),
        "square": (ops.square, [(3, 4)]),
    }


@pytest.mark.parametrize("name", sorted(_cases()))
def test_primitive_gradients(name):
    fn, shapes = _cases()[name]
    inputs = []
    for shape in shapes:
        if shape[0] == "pos":
            inputs.append(leaf(*shape[1:], low=0.5, high=1.5))
        else:
            inputs.append(leaf(*shape))
    err = finite_difference_check(lambda: weighted_sum(fn(*inputs)), inputs)
    assert err < 1e-6, f"{name}: {err:.2e}"


def test_gradcheck_square_example():
    x = Tensor(np.array(3.0), requires_grad=True)
    with Tape():
        backward(ops.square(x))
    assert x.grad == 6.0
    assert finite_difference_check(lambda: ops.square(x), [x], epsilon=1e-5) < 1e-8


def test_corrupted_tanh_backward_is_caught(monkeypatch):
    x = leaf(4, 3)
    loss = lambda: weighted_sum(ops.tanh(x))
    assert finite_difference_check(loss, [x]) < 1e-6
    # mutation: cosh in place of 1 - tanh^2
    monkeypatch.setattr(ops, "_tanh_grad", lambda y, g: g * np.cosh(np.arctanh(y)))
    err = finite_difference_check(loss, [x])
    assert err > 1e-2
    with pytest.raises(GradientCheckError):
        finite_difference_check(loss, [x], tolerance=1e-4)


def test_gradcheck_reports_non_finite_probe():
    x = Tensor(np.array([709.0, 1.0]), requires_grad=True)
    with np.errstate(over="ignore"), pytest.raises(GradientCheckError, match="parameter 0 entry 0"):
        finite_difference_check(lambda: ops.sum(ops.exp(x)), [x], epsilon=1.0)


# -- property tests -----------------------------------------------------------

arrays = hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
                    elements=st.floats(-50, 50))


@settings(max_examples=60, deadline=None)
@given(arrays)
def test_softmax_is_a_distribution(x):
    y = ops.softmax(Tensor(x)).data
    assert (y >= 0).all()
    np.testing.assert_allclose(y.sum(-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.exp(ops.log_softmax(Tensor(x)).data), y, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.booleans())
def test_broadcast_add_grad_sums_back(rows, cols, keep_row):
    a = Tensor(np.ones((rows, cols)), requires_grad=True)
    b = Tensor(np.ones((1, cols) if keep_row else (cols,)), requires_grad=True)
    with Tape():
        backward(ops.sum(ops.add(a, b)))
    assert b.grad.shape == b.shape
    np.testing.assert_array_equal(b.grad, np.full(b.shape, rows))


# -- compiled and fallback kernels agree ---------------------------------------

@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_compiled_kernels_match_fallback():
    from asvaet.autodiff import _ckernels
    x = RNG.normal(size=(9, 7))
    g = RNG.normal(size=(9, 7))
    gain, bias = RNG.normal(size=7), RNG.normal(size=7)
    for mod in (_ckernels,):
        y = mod.softmax_fwd(x)
        np.testing.assert_allclose(y, _pykernels.softmax_fwd(x), atol=1e-14)
        np.testing.assert_allclose(mod.softmax_bwd(y, g), _pykernels.softmax_bwd(y, g), atol=1e-14)
        ly = mod.log_softmax_fwd(x)
        np.testing.assert_allclose(ly, _pykernels.log_softmax_fwd(x), atol=1e-13)
        np.testing.assert_allclose(mod.log_softmax_bwd(ly, g), _pykernels.log_softmax_bwd(ly, g), atol=1e-13)
        c_out = mod.layer_norm_fwd(x, gain, bias, 1e-5)
        p_out = _pykernels.layer_norm_fwd(x, gain, bias, 1e-5)
        for a, b in zip(c_out, p_out):
            np.testing.assert_allclose(a, b, atol=1e-12)
        for a, b in zip(mod.layer_norm_bwd(g, c_out[1], c_out[2], gain),
                        _pykernels.layer_norm_bwd(g, p_out[1], p_out[2], gain)):
            np.testing.assert_allclose(a, b, atol=1e-12)
        idx = np.array([0, 3, 3, 1, 0], dtype=np.int64)
        src = RNG.normal(size=(5, 7))
        np.testing.assert_allclose(mod.scatter_add_rows(4, idx, src),
                                   _pykernels.scatter_add_rows(4, idx, src), atol=1e-14)
