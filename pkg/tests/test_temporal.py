"""GRU cell and prediction head."""

import numpy as np
import numpy.testing as npt
import pytest

import sharegnn.autodiff as ad
from sharegnn.gradcheck import finite_difference_oracle, max_relative_error
from sharegnn.temporal import (
    GruParams,
    PredictionHead,
    gru_cell,
    initial_hidden,
    predict_head,
)


def np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def make_cell(rng, hidden, x_dim):
    return GruParams.init(rng, hidden, x_dim)


def test_update_gate_forced_shut_keeps_state():
    rng = np.random.default_rng(0)
    cell = make_cell(rng, 4, 3)
    cell.b_z.values[:] = -60.0  # z ~ sigmoid(-60), numerically negligible
    h = rng.standard_normal((5, 4))
    x = rng.standard_normal((5, 3))
    out = gru_cell(cell, ad.constant(h), ad.constant(x))
    npt.assert_allclose(out.values, h, atol=1e-12)


def test_all_zero_weights_halve_the_state():
    cell = GruParams(
        w_r=ad.parameter(np.zeros((7, 4))),
        w_z=ad.parameter(np.zeros((7, 4))),
        w_h=ad.parameter(np.zeros((7, 4))),
        b_r=ad.parameter(np.zeros(4)),
        b_z=ad.parameter(np.zeros(4)),
        b_h=ad.parameter(np.zeros(4)),
        hidden=4,
    )
    h = np.random.default_rng(1).standard_normal((3, 4))
    out = gru_cell(cell, ad.constant(h), ad.constant(np.ones((3, 3))))
    # r = z = 0.5 and candidate = tanh(0) = 0, so the state simply halves
    npt.assert_allclose(out.values, 0.5 * h, atol=1e-15)


def test_two_unit_cell_matches_hand_evaluation():
    w_r = np.array([[0.1, -0.2], [0.3, 0.0], [0.2, 0.5]])
    w_z = np.array([[-0.1, 0.4], [0.2, 0.1], [0.0, -0.3]])
    w_h = np.array([[0.5, 0.1], [-0.2, 0.2], [0.3, 0.3]])
    b_r, b_z, b_h = np.array([0.1, -0.1]), np.array([0.0, 0.2]), np.array([-0.2, 0.0])
    cell = GruParams(
        w_r=ad.parameter(w_r),
        w_z=ad.parameter(w_z),
        w_h=ad.parameter(w_h),
        b_r=ad.parameter(b_r),
        b_z=ad.parameter(b_z),
        b_h=ad.parameter(b_h),
        hidden=2,
    )
    h = np.array([[0.3, -0.4]])
    x = np.array([[0.7]])
    hx = np.concatenate([h, x], axis=1)
    r = np_sigmoid(hx @ w_r + b_r)
    z = np_sigmoid(hx @ w_z + b_z)
    cand = np.tanh(np.concatenate([r * h, x], axis=1) @ w_h + b_h)
    expected = (1.0 - z) * h + z * cand
    out = gru_cell(cell, ad.constant(h), ad.constant(x))
    npt.assert_allclose(out.values, expected, atol=1e-14)


def test_state_bounded_after_first_step_from_zero():
    rng = np.random.default_rng(2)
    for _ in range(20):
        cell = make_cell(rng, 6, 4)
        h = ad.constant(initial_hidden(8, 6))
        x = ad.constant(rng.standard_normal((8, 4)) * 3.0)
        out = gru_cell(cell, h, x)
        assert np.all(np.abs(out.values) < 1.0)


def test_head_zero_weights_give_half():
    head = PredictionHead(w_o=ad.parameter(np.zeros((4, 3))), horizons=3)
    out = predict_head(head, ad.constant(np.random.default_rng(3).standard_normal((5, 4))))
    npt.assert_allclose(out.values, np.full((5, 3), 0.5), atol=1e-15)


def test_head_zero_state_gives_half():
    rng = np.random.default_rng(4)
    head = PredictionHead.init(rng, 4, 3)
    out = predict_head(head, ad.constant(np.zeros((5, 4))))
    npt.assert_allclose(out.values, np.full((5, 3), 0.5), atol=1e-15)


def test_head_matches_direct_evaluation_and_stays_open_interval():
    rng = np.random.default_rng(5)
    w = rng.standard_normal((4, 3))
    h = rng.standard_normal((6, 4)) * 4.0
    head = PredictionHead(w_o=ad.parameter(w), horizons=3)
    out = predict_head(head, ad.constant(h))
    npt.assert_allclose(out.values, np_sigmoid(h @ w), atol=1e-14)
    assert np.all(out.values > 0.0) and np.all(out.values < 1.0)


def test_head_rejects_empty_horizons():
    with pytest.raises(ValueError, match="horizon"):
        PredictionHead.init(np.random.default_rng(6), 4, 0)


def test_cell_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    cell = make_cell(rng, 3, 2)
    h0 = ad.parameter(rng.standard_normal((4, 3)) * 0.5)
    x = ad.constant(rng.standard_normal((4, 2)))

    def build():
        out = gru_cell(cell, h0, x)
        return ad.reduce_sum(ad.mul(out, out))

    params = cell.named_parameters("gru") + [("h_prev", h0)]
    out = build()
    ad.backward(out)
    analytic = [p.grad.copy() for _n, p in params]
    numeric = finite_difference_oracle(lambda: build().values, [p for _n, p in params], h=1e-5)
    for (name, _p), a, n in zip(params, analytic, numeric):
        assert max_relative_error(a, n) < 1e-4, name


def test_unrolled_window_reaches_first_step():
    # credit assignment must flow through all T steps back to the window start
    rng = np.random.default_rng(8)
    cell = make_cell(rng, 3, 2)
    head = PredictionHead.init(rng, 3, 2)
    steps = [ad.parameter(rng.standard_normal((4, 2))) for _ in range(6)]
    h = ad.constant(initial_hidden(4, 3))
    for x in steps:
        h = gru_cell(cell, h, x)
    ad.backward(ad.reduce_sum(predict_head(head, h)))
    assert steps[0].grad is not None
    assert np.any(steps[0].grad != 0.0)
