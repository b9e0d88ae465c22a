"""Dense float64 tensors with taped reverse-mode differentiation.

The primitive catalog is deliberately small: matrix multiply, transpose,
broadcasting add / elementwise multiply, concatenation along the last axis,
sigmoid, tanh, leaky rectifier, (masked) row softmax, sum / mean reductions,
floor-clamped log, and scalar scaling.  Every forward that touches a tensor
with ``requires_grad`` is appended to a :class:`ComputationRecord`; calling
:func:`backward` on a scalar result replays the record in reverse and fills
the ``grad`` slots of all participating tensors.

All values are 64-bit floats.  Guarded operations (clamped log, shifted
softmax, saturating sigmoid) keep finite inputs producing finite outputs.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to a primitive's signature."""


class Tensor:
    """A dense float64 array with an optional gradient slot.

    Tensors are immutable after construction except for the optimizer's
    in-place parameter update.  ``record`` points at the computation record
    that produced the tensor (``None`` for leaves and constants).
    """

    __slots__ = ("values", "requires_grad", "grad", "record")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.record: Optional["ComputationRecord"] = None

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{flag})"


def constant(values) -> Tensor:
    """A tensor that never receives gradients."""
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    """A learnable leaf tensor."""
    return Tensor(values, requires_grad=True)


class ComputationRecord:
    """Ordered log of executed primitives, replayable in reverse.

    The ordering invariant holds by construction: an operation is appended
    only after the operations producing its inputs.  One record belongs to
    exactly one training step; a second ``backward`` without ``reset`` is an
    error so that double-backward cannot silently accumulate stale adjoints.
    """

    __slots__ = ("entries", "consumed")

    def __init__(self):
        self.entries: list = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.entries)

    def reset(self) -> None:
        """Clear every gradient this record touched; allow replay."""
        for _kind, inputs, output, _attrs in self.entries:
            output.grad = None
            for t in inputs:
                t.grad = None
        self.consumed = False


_active_record: Optional[ComputationRecord] = None
_recording_enabled = True


def active_record() -> Optional[ComputationRecord]:
    return _active_record


def new_record() -> ComputationRecord:
    """Start a fresh record; subsequent recorded primitives append to it."""
    global _active_record
    _active_record = ComputationRecord()
    return _active_record


class no_recording:
    """Context manager disabling the tape, for inference-only forwards."""

    def __enter__(self):
        global _recording_enabled
        self._prev = _recording_enabled
        _recording_enabled = False
        return self

    def __exit__(self, *exc):
        global _recording_enabled
        _recording_enabled = self._prev
        return False


# ---------------------------------------------------------------------------
# primitive forward / backward implementations
#
# Forward functions map (input value arrays, attrs) -> output array.
# Backward functions map (upstream grad, input arrays, output array, attrs,
# needs) -> per-input gradient arrays (None where needs[i] is False).
# ---------------------------------------------------------------------------


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _fw_matmul(vals, attrs):
    a, b = vals
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} not conformable")
    return a @ b


def _bw_matmul(g, vals, out, attrs, needs):
    a, b = vals
    ga = g @ b.T if needs[0] else None
    gb = a.T @ g if needs[1] else None
    return ga, gb


def _fw_transpose(vals, attrs):
    (a,) = vals
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d input, got shape {a.shape}")
    return a.T.copy()


def _bw_transpose(g, vals, out, attrs, needs):
    return (g.T.copy(),)


def _check_broadcast(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _fw_add(vals, attrs):
    a, b = vals
    _check_broadcast("add", a, b)
    return a + b


def _bw_add(g, vals, out, attrs, needs):
    a, b = vals
    ga = _unbroadcast(g, a.shape) if needs[0] else None
    gb = _unbroadcast(g, b.shape) if needs[1] else None
    return ga, gb


def _fw_mul(vals, attrs):
    a, b = vals
    _check_broadcast("mul", a, b)
    return a * b


def _bw_mul(g, vals, out, attrs, needs):
    a, b = vals
    ga = _unbroadcast(g * b, a.shape) if needs[0] else None
    gb = _unbroadcast(g * a, b.shape) if needs[1] else None
    return ga, gb


def _fw_concat(vals, attrs):
    base = vals[0].shape[:-1]
    for v in vals[1:]:
        if v.shape[:-1] != base:
            raise ShapeError(
                f"concat: leading dimensions differ, {vals[0].shape} vs {v.shape}"
            )
    return np.concatenate(vals, axis=-1)


def _bw_concat(g, vals, out, attrs, needs):
    grads = []
    offset = 0
    for v, need in zip(vals, needs):
        width = v.shape[-1]
        grads.append(g[..., offset:offset + width] if need else None)
        offset += width
    return tuple(grads)


def _fw_sigmoid(vals, attrs):
    (x,) = vals
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _bw_sigmoid(g, vals, out, attrs, needs):
    return (g * out * (1.0 - out),)


def _fw_tanh(vals, attrs):
    return np.tanh(vals[0])


def _bw_tanh(g, vals, out, attrs, needs):
    return (g * (1.0 - out * out),)


def _fw_leaky_relu(vals, attrs):
    (x,) = vals
    slope = attrs["slope"]
    if slope <= 0:
        raise ValueError(f"leaky_relu: slope must be positive, got {slope}")
    return np.where(x > 0, x, slope * x)


def _bw_leaky_relu(g, vals, out, attrs, needs):
    x = vals[0]
    slope = attrs["slope"]
    return (g * np.where(x > 0, 1.0, slope),)


def _fw_softmax(vals, attrs):
    (x,) = vals
    mask = attrs.get("mask")
    if mask is None:
        m = x.max(axis=-1, keepdims=True)
        e = np.exp(x - m)
    else:
        if mask.shape != x.shape:
            raise ShapeError(f"softmax: mask shape {mask.shape} != input shape {x.shape}")
        masked = np.where(mask > 0, x, -np.inf)
        m = masked.max(axis=-1, keepdims=True)
        # a fully masked row would turn into nan via (-inf) - (-inf)
        if np.isneginf(m).any():
            raise ValueError("softmax: empty neighborhood (row with all-zero mask)")
        e = np.exp(masked - m)  # exp(-inf) gives exact zeros off-neighborhood
    s = e.sum(axis=-1, keepdims=True)
    return e / s


def _bw_softmax(g, vals, out, attrs, needs):
    inner = (g * out).sum(axis=-1, keepdims=True)
    return (out * (g - inner),)


def _fw_sum(vals, attrs):
    return np.sum(vals[0], axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False))


def _spread(g, in_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, in_shape)
    if not keepdims:
        g = np.expand_dims(g, axis=axis)
    return np.broadcast_to(g, in_shape)


def _bw_sum(g, vals, out, attrs, needs):
    return (_spread(g, vals[0].shape, attrs.get("axis"), attrs.get("keepdims", False)),)


def _fw_mean(vals, attrs):
    return np.mean(vals[0], axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False))


def _bw_mean(g, vals, out, attrs, needs):
    x = vals[0]
    axis = attrs.get("axis")
    n = x.size if axis is None else x.shape[axis]
    return (_spread(g, x.shape, axis, attrs.get("keepdims", False)) / n,)


def _fw_log(vals, attrs):
    floor = attrs.get("floor", 1e-12)
    if floor <= 0:
        raise ValueError(f"log: clamp floor must be positive, got {floor}")
    return np.log(np.maximum(vals[0], floor))


def _bw_log(g, vals, out, attrs, needs):
    x = vals[0]
    floor = attrs.get("floor", 1e-12)
    return (g * (x > floor) / np.maximum(x, floor),)


def _fw_scale(vals, attrs):
    return vals[0] * attrs["factor"]


def _bw_scale(g, vals, out, attrs, needs):
    return (g * attrs["factor"],)


_FORWARD = {
    "matmul": _fw_matmul,
    "transpose": _fw_transpose,
    "add": _fw_add,
    "mul": _fw_mul,
    "concat": _fw_concat,
    "sigmoid": _fw_sigmoid,
    "tanh": _fw_tanh,
    "leaky_relu": _fw_leaky_relu,
    "softmax": _fw_softmax,
    "sum": _fw_sum,
    "mean": _fw_mean,
    "log": _fw_log,
    "scale": _fw_scale,
}

_BACKWARD = {
    "matmul": _bw_matmul,
    "transpose": _bw_transpose,
    "add": _bw_add,
    "mul": _bw_mul,
    "concat": _bw_concat,
    "sigmoid": _bw_sigmoid,
    "tanh": _bw_tanh,
    "leaky_relu": _bw_leaky_relu,
    "softmax": _bw_softmax,
    "sum": _bw_sum,
    "mean": _bw_mean,
    "log": _bw_log,
    "scale": _bw_scale,
}


def primitive_forward(kind: str, inputs: Sequence, attrs: Optional[dict] = None) -> Tensor:
    """Execute one primitive; append it to the active record when needed.

    ``inputs`` may mix tensors and plain arrays; arrays are wrapped as
    constants.  Unknown kinds and non-conforming shapes raise.
    """
    fwd = _FORWARD.get(kind)
    if fwd is None:
        raise ValueError(f"unknown primitive kind: {kind!r}")
    attrs = attrs or {}
    tensors = tuple(x if isinstance(x, Tensor) else Tensor(x) for x in inputs)
    out_values = fwd([t.values for t in tensors], attrs)

    out = Tensor.__new__(Tensor)
    out.values = out_values
    out.grad = None
    out.record = None

    needs_grad = _recording_enabled and any(t.requires_grad for t in tensors)
    out.requires_grad = needs_grad
    if needs_grad:
        global _active_record
        if _active_record is None or _active_record.consumed:
            _active_record = ComputationRecord()
        out.record = _active_record
        _active_record.entries.append((kind, tensors, out, attrs))
    return out


def backward(output: Tensor) -> None:
    """Fill ``grad`` slots of every tensor reachable from ``output``.

    Gradients accumulate additively across fan-out.  Only scalar outputs are
    accepted, and a record can be walked once until it is reset.
    """
    if output.values.shape != ():
        raise ValueError(
            f"backward requires a scalar tensor, got shape {output.values.shape}"
        )
    record = output.record
    if record is None:
        raise ValueError("backward: tensor has no computation record")
    if record.consumed:
        raise RuntimeError("backward: record already consumed; call reset() first")
    record.consumed = True

    output.grad = np.ones((), dtype=np.float64)
    for kind, inputs, out, attrs in reversed(record.entries):
        g = out.grad
        if g is None:
            continue
        needs = tuple(t.requires_grad for t in inputs)
        grads = _BACKWARD[kind](g, [t.values for t in inputs], out.values, attrs, needs)
        for t, gi in zip(inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            if t.grad is None:
                t.grad = gi
            else:
                t.grad = t.grad + gi


# ---------------------------------------------------------------------------
# thin call-site wrappers
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    return primitive_forward("matmul", (a, b))


def transpose(a) -> Tensor:
    return primitive_forward("transpose", (a,))


def add(a, b) -> Tensor:
    return primitive_forward("add", (a, b))


def mul(a, b) -> Tensor:
    return primitive_forward("mul", (a, b))


def sub(a, b) -> Tensor:
    """a - b, composed from scale and add."""
    return primitive_forward("add", (a, primitive_forward("scale", (b,), {"factor": -1.0})))


def concat(parts: Sequence) -> Tensor:
    return primitive_forward("concat", tuple(parts))


def sigmoid(x) -> Tensor:
    return primitive_forward("sigmoid", (x,))


def tanh(x) -> Tensor:
    return primitive_forward("tanh", (x,))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    return primitive_forward("leaky_relu", (x,), {"slope": slope})


def softmax(x, mask: Optional[np.ndarray] = None) -> Tensor:
    attrs = {} if mask is None else {"mask": np.asarray(mask, dtype=np.float64)}
    return primitive_forward("softmax", (x,), attrs)


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    return primitive_forward("sum", (x,), {"axis": axis, "keepdims": keepdims})


def reduce_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    return primitive_forward("mean", (x,), {"axis": axis, "keepdims": keepdims})


def log(x, floor: float = 1e-12) -> Tensor:
    return primitive_forward("log", (x,), {"floor": floor})


def scale(x, factor: float) -> Tensor:
    return primitive_forward("scale", (x,), {"factor": float(factor)})
