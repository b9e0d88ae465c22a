"""Gated recurrent cell and the multi-horizon prediction head.

One GRU is shared across all lots; each lot advances its own hidden row.
Hidden state starts at zero at every window boundary, so a window is
self-contained and replayable.  The head maps the final hidden state to all
tau horizons at once through a sigmoid, keeping predictions in (0,1) on the
capacity-normalized scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat,
    matmul,
    mul,
    parameter,
    sigmoid,
    sub,
    tanh,
)
from .spatial import glorot


@dataclass
class GruParams:
    """Reset/update/candidate gates over the concatenated [h, x] input."""

    w_r: Tensor
    w_z: Tensor
    w_h: Tensor
    b_r: Tensor
    b_z: Tensor
    b_h: Tensor
    hidden: int

    @classmethod
    def init(cls, rng, hidden, x_dim):
        d_in = hidden + x_dim
        return cls(
            w_r=parameter(glorot(rng, d_in, hidden)),
            w_z=parameter(glorot(rng, d_in, hidden)),
            w_h=parameter(glorot(rng, d_in, hidden)),
            b_r=parameter(np.zeros(hidden)),
            b_z=parameter(np.zeros(hidden)),
            b_h=parameter(np.zeros(hidden)),
            hidden=hidden,
        )

    def named_parameters(self, prefix):
        return [
            (prefix + ".w_r", self.w_r),
            (prefix + ".w_z", self.w_z),
            (prefix + ".w_h", self.w_h),
            (prefix + ".b_r", self.b_r),
            (prefix + ".b_z", self.b_z),
            (prefix + ".b_h", self.b_h),
        ]


@dataclass
class PredictionHead:
    """Direct multi-horizon readout: all tau steps from one hidden state."""

    w_o: Tensor
    horizons: int

    @classmethod
    def init(cls, rng, hidden, horizons):
        if horizons < 1:
            raise ValueError("prediction head needs at least one horizon")
        return cls(w_o=parameter(glorot(rng, hidden, horizons)), horizons=horizons)

    def named_parameters(self, prefix):
        return [(prefix + ".w_o", self.w_o)]


def gru_cell(params, h_prev, x_t):
    """One gated update, batched over lots (rows).

    r = sigma(W_r[h,x]+b_r); z = sigma(W_z[h,x]+b_z);
    h~ = tanh(W_h[r*h, x]+b_h); new state h + z*(h~ - h), which is the
    (1-z)*h + z*h~ convex mix written to reuse the primitive set.
    """
    hx = concat([h_prev, x_t])
    r = sigmoid(add(matmul(hx, params.w_r), params.b_r))
    z = sigmoid(add(matmul(hx, params.w_z), params.b_z))
    cand_in = concat([mul(r, h_prev), x_t])
    h_tilde = tanh(add(matmul(cand_in, params.w_h), params.b_h))
    return add(h_prev, mul(z, sub(h_tilde, h_prev)))


def predict_head(head, h_t):
    """Normalized predictions in (0,1), one column per horizon."""
    return sigmoid(matmul(h_t, head.w_o))


def initial_hidden(n_lots, hidden):
    return np.zeros((n_lots, hidden))
