"""Adam optimizer with bias correction over named parameter tensors."""

from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .autodiff import ShapeError, Tensor


class AdamState:
    """First/second moment accumulators plus the step counter."""

    __slots__ = ("step", "m", "v")

    def __init__(self, params: Sequence[Tuple[str, Tensor]]):
        self.step = 0
        self.m = {name: np.zeros_like(p.values) for name, p in params}
        self.v = {name: np.zeros_like(p.values) for name, p in params}


def adam_step(
    params: Sequence[Tuple[str, Tensor]],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One in-place Adam update; moments advance even when ``lr == 0``."""
    if lr < 0:
        raise ValueError(f"adam_step: lr must be >= 0, got {lr}")
    state.step += 1
    t = state.step
    for name, p in params:
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.values)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.values.shape:
            raise ShapeError(
                f"adam_step: grad shape {g.shape} != param {name!r} shape {p.values.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


class Adam:
    """Stateful wrapper reading gradients straight off the parameter tensors."""

    def __init__(
        self,
        params: Sequence[Tuple[str, Tensor]],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState(self.params)

    def step(self, grads: Optional[Dict[str, np.ndarray]] = None) -> None:
        if grads is None:
            grads = {
                name: (p.grad if p.grad is not None else np.zeros_like(p.values))
                for name, p in self.params
            }
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for _name, p in self.params:
            p.grad = None
