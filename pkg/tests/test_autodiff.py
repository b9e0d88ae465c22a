"""Tensor primitives, taping, and reverse-mode gradients."""

import numpy as np
import numpy.testing as npt
import pytest

from sharegnn import autodiff as ad
from sharegnn.gradcheck import finite_difference_oracle, max_relative_error


def test_softmax_symmetry():
    out = ad.softmax(ad.constant([0.0, 0.0, 0.0]))
    npt.assert_allclose(out.values, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_softmax_direct_evaluation():
    # exp(ln 2) / (exp(ln 2) + exp(0)) = 2/3
    out = ad.softmax(ad.constant([np.log(2.0), 0.0]))
    npt.assert_allclose(out.values, [2 / 3, 1 / 3], atol=1e-15)


def test_leaky_relu_definition():
    out = ad.leaky_relu(ad.constant([-1.0, 2.0]), slope=0.2)
    npt.assert_allclose(out.values, [-0.2, 2.0])


def test_concat_shapes():
    out = ad.concat([ad.constant(np.zeros(2)), ad.constant(np.zeros(3))])
    assert out.shape == (5,)


def test_concat_mismatch_raises():
    with pytest.raises(ad.ShapeError):
        ad.concat([ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((4, 3)))])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ad.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 3))))


def test_unknown_primitive_kind():
    with pytest.raises(ValueError, match="unknown primitive"):
        ad.primitive_forward("convolve", (ad.constant([1.0]),))


def test_backward_sum_of_squares():
    x = ad.parameter([1.0, 2.0, 3.0])
    y = ad.reduce_sum(ad.mul(x, x))
    ad.backward(y)
    npt.assert_allclose(x.grad, [2.0, 4.0, 6.0])


def test_backward_sigmoid_at_zero():
    x = ad.parameter(np.zeros(()))
    y = ad.sigmoid(x)
    ad.backward(y)
    npt.assert_allclose(x.grad, 0.25)


def test_backward_requires_scalar():
    x = ad.parameter([1.0, 2.0])
    y = ad.mul(x, x)
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(y)


def test_backward_twice_without_reset_raises():
    x = ad.parameter([1.0, 2.0])
    y = ad.reduce_sum(ad.mul(x, x))
    ad.backward(y)
    with pytest.raises(RuntimeError, match="consumed"):
        ad.backward(y)


def test_gradient_accumulates_across_fanout():
    x = ad.parameter([3.0])
    y = ad.reduce_sum(ad.add(x, x))
    ad.backward(y)
    npt.assert_allclose(x.grad, [2.0])


def test_replay_after_reset_is_bit_identical():
    rng = np.random.default_rng(7)
    x = ad.parameter(rng.standard_normal((4, 3)))
    w = ad.parameter(rng.standard_normal((3, 2)))
    y = ad.reduce_sum(ad.sigmoid(ad.matmul(x, w)))
    record = y.record
    ad.backward(y)
    gx1, gw1 = x.grad.copy(), w.grad.copy()
    record.reset()
    assert x.grad is None and w.grad is None
    ad.backward(y)
    assert np.array_equal(gx1, x.grad)
    assert np.array_equal(gw1, w.grad)


def test_no_recording_context():
    with ad.no_recording():
        x = ad.parameter([1.0])
        y = ad.reduce_sum(ad.mul(x, x))
    assert y.record is None
    with pytest.raises(ValueError, match="no computation record"):
        ad.backward(y)


def test_add_broadcast_leading_axis():
    x = ad.parameter(np.ones((4, 3)))
    b = ad.parameter(np.arange(3.0))
    y = ad.reduce_sum(ad.add(x, b))
    npt.assert_allclose(y.values, 4 * 3 + 4 * (0 + 1 + 2))
    ad.backward(y)
    npt.assert_allclose(b.grad, [4.0, 4.0, 4.0])
    npt.assert_allclose(x.grad, np.ones((4, 3)))


def test_softmax_rows_are_stochastic():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((50, 7)) * 5
    out = ad.softmax(ad.constant(x))
    assert (out.values >= 0).all()
    npt.assert_allclose(out.values.sum(axis=-1), np.ones(50), atol=1e-9)


def test_masked_softmax_zeroes_masked_entries():
    x = np.array([[1.0, 100.0, 2.0]])
    mask = np.array([[1.0, 0.0, 1.0]])
    out = ad.softmax(ad.constant(x), mask=mask)
    assert out.values[0, 1] == 0.0
    # remaining entries renormalize: softmax over [1, 2]
    e = np.exp([1.0 - 2.0, 0.0])
    npt.assert_allclose(out.values[0, [0, 2]], e / e.sum(), atol=1e-12)
    npt.assert_allclose(out.values.sum(), 1.0, atol=1e-12)


def test_masked_softmax_empty_row_raises():
    with pytest.raises(ValueError, match="empty neighborhood"):
        ad.softmax(ad.constant(np.zeros((2, 3))), mask=np.array([[1.0, 0, 0], [0, 0, 0]]))


def test_log_clamp_is_finite_at_zero():
    out = ad.log(ad.constant([0.0, 1.0]))
    assert np.isfinite(out.values).all()
    npt.assert_allclose(out.values[1], 0.0)
    npt.assert_allclose(out.values[0], np.log(1e-12))


def test_sigmoid_extreme_inputs_stay_finite():
    out = ad.sigmoid(ad.constant([-1e4, 0.0, 1e4]))
    assert np.isfinite(out.values).all()
    npt.assert_allclose(out.values, [0.0, 0.5, 1.0], atol=1e-12)


def _fd_check(build, params, tol, h=1e-6):
    """Backward vs central differences for a scalar-valued builder."""
    out = build()
    ad.backward(out)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.values) for p in params]
    numeric = finite_difference_oracle(lambda: build().values, params, h=h)
    for a, n in zip(analytic, numeric):
        assert max_relative_error(a, n) < tol


SMOOTH_CASES = {
    "matmul": lambda a, b: ad.reduce_sum(ad.sigmoid(ad.matmul(a, b))),
    "transpose": lambda a, b: ad.reduce_sum(ad.mul(ad.transpose(a), ad.transpose(a))),
    "add": lambda a, b: ad.reduce_sum(ad.tanh(ad.add(a, ad.transpose(b)))),
    "mul": lambda a, b: ad.reduce_sum(ad.mul(a, a)),
    "concat": lambda a, b: ad.reduce_sum(ad.sigmoid(ad.concat([a, ad.transpose(b)]))),
    "sigmoid": lambda a, b: ad.reduce_sum(ad.sigmoid(a)),
    "tanh": lambda a, b: ad.reduce_sum(ad.tanh(a)),
    "softmax": lambda a, b: ad.reduce_sum(ad.mul(ad.softmax(a), ad.sigmoid(a))),
    "mean": lambda a, b: ad.reduce_mean(ad.mul(a, a)),
    "scale": lambda a, b: ad.reduce_sum(ad.scale(ad.sigmoid(a), 2.5)),
    "sub": lambda a, b: ad.reduce_sum(ad.mul(ad.sub(a, ad.transpose(b)), a)),
}


@pytest.mark.parametrize("name", sorted(SMOOTH_CASES))
def test_primitive_gradients_match_finite_differences(name):
    build_case = SMOOTH_CASES[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    for _trial in range(20):
        a = ad.parameter(rng.standard_normal((3, 4)))
        b = ad.parameter(rng.standard_normal((4, 3)))
        _fd_check(lambda: build_case(a, b), [a, b], tol=1e-6)


def test_leaky_relu_gradient_away_from_kink():
    rng = np.random.default_rng(11)
    for _trial in range(20):
        vals = rng.standard_normal((3, 4))
        vals[np.abs(vals) < 1e-3] = 0.1  # keep a margin from the kink
        a = ad.parameter(vals)
        _fd_check(lambda: ad.reduce_sum(ad.leaky_relu(a, slope=0.2)), [a], tol=1e-6)


def test_masked_softmax_gradient():
    rng = np.random.default_rng(12)
    mask = (rng.random((4, 5)) < 0.6).astype(float)
    mask[:, 0] = 1.0  # no empty rows
    for _trial in range(20):
        a = ad.parameter(rng.standard_normal((4, 5)))
        w = ad.constant(rng.standard_normal((4, 5)))
        _fd_check(lambda: ad.reduce_sum(ad.mul(ad.softmax(a, mask=mask), w)), [a], tol=1e-6)


def test_log_gradient_above_floor():
    rng = np.random.default_rng(13)
    for _trial in range(20):
        a = ad.parameter(rng.random((3, 4)) + 0.5)
        _fd_check(lambda: ad.reduce_sum(ad.log(a)), [a], tol=1e-6)


def test_sum_axis_keepdims_gradient():
    rng = np.random.default_rng(14)
    a = ad.parameter(rng.standard_normal((3, 4)))
    _fd_check(
        lambda: ad.reduce_sum(ad.mul(ad.reduce_sum(ad.mul(a, a), axis=-1, keepdims=True), a)),
        [a],
        tol=1e-6,
    )


def test_composed_layer_gradient_matches_oracle():
    rng = np.random.default_rng(15)
    x = ad.constant(rng.standard_normal((5, 3)))
    w1 = ad.parameter(rng.standard_normal((3, 4)) * 0.5)
    w2 = ad.parameter(rng.standard_normal((4, 2)) * 0.5)
    b = ad.parameter(np.zeros(2))

    def build():
        h = ad.leaky_relu(ad.matmul(x, w1), slope=0.2)
        out = ad.add(ad.matmul(h, w2), b)
        return ad.reduce_sum(ad.mul(ad.softmax(out), out))

    _fd_check(build, [w1, w2, b], tol=1e-4, h=1e-5)
