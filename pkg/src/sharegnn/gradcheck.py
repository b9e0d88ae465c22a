"""Central finite-difference oracle for verifying reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .autodiff import Tensor


def finite_difference_oracle(
    f: Callable[[], float],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> List[np.ndarray]:
    """Central-difference gradient of ``f`` w.r.t. every coordinate of ``params``.

    ``f`` must be a deterministic closure over the parameter tensors; values
    are perturbed in place and restored exactly.  Non-finite evaluations
    raise.
    """
    if h <= 0:
        raise ValueError(f"finite_difference_oracle: h must be positive, got {h}")
    grads = []
    for p in params:
        flat = p.values.reshape(-1)
        g = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f())
            flat[i] = orig - h
            fm = float(f())
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ValueError(
                    f"finite_difference_oracle: non-finite evaluation at coordinate {i}"
                )
            g[i] = (fp - fm) / (2.0 * h)
        grads.append(g.reshape(p.values.shape))
    return grads


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max_i |a_i - b_i| / max(1, |a_i|, |b_i|); 0 for empty arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def compare_gradients(
    f: Callable[[], float],
    backward_fn: Callable[[], Dict[str, np.ndarray]],
    params: Sequence[Tuple[str, Tensor]],
    h: float = 1e-5,
) -> Dict[str, float]:
    """Per-parameter max relative error between reverse mode and the oracle.

    ``backward_fn`` runs one forward+backward pass and returns gradients by
    parameter name; ``f`` evaluates the same scalar objective forward-only.
    """
    analytic = backward_fn()
    numeric = finite_difference_oracle(f, [p for _n, p in params], h=h)
    report = {}
    for (name, _p), num in zip(params, numeric):
        report[name] = max_relative_error(analytic[name], num)
    return report
