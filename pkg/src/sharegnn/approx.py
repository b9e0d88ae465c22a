"""Parking-availability approximation for lots without sensors.

Observed counts become one-hot distributions over p capacity-relative bins.
A propagating convolution spreads those one-hots from labeled lots across the
relaxed nearest-labeled graph, a softmax head reads a second distribution off
the previous hidden state, and the two estimates are fused with weights
exp(-H): the sharper (lower-entropy) estimate dominates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat,
    constant,
    log,
    matmul,
    mul,
    parameter,
    reduce_sum,
    scale,
    softmax,
    transpose,
)
from .spatial import glorot

P_BINS = 50


@dataclass
class TemporalHeadParams:
    """Projection from the previous hidden state to a PA distribution."""

    w_tp: Tensor

    @classmethod
    def init(cls, rng, hidden, p=P_BINS):
        return cls(w_tp=parameter(glorot(rng, hidden, p)))

    def named_parameters(self, prefix):
        return [(prefix + ".w_tp", self.w_tp)]


def discretize_pa(y, capacity, p=P_BINS, scale_to=None):
    """One-hot distribution for one observed count.

    Bin index is floor(p*y/denominator), clamped to p-1 so a full lot still
    lands in the last bin.  The denominator is the lot's own capacity unless
    an absolute scale (e.g. the city-wide max capacity) is passed, which bins
    raw counts on one shared grid instead.
    """
    if y < 0 or y > capacity:
        raise ValueError(f"PA outside capacity: y={y}, capacity={capacity}")
    denom = float(capacity if scale_to is None else scale_to)
    b = min(int(math.floor(p * float(y) / denom)), p - 1)
    out = np.zeros(p)
    out[b] = 1.0
    return out


def pa_bins(counts, capacities, p=P_BINS, scale_to=None):
    """Vectorized bin indices; exact integer arithmetic when counts are ints."""
    counts = np.asarray(counts)
    caps = np.asarray(capacities)
    if np.any(counts < 0) or np.any(counts > caps):
        raise ValueError("PA outside capacity")
    denom = caps if scale_to is None else np.asarray(scale_to)
    if np.issubdtype(counts.dtype, np.integer) and np.issubdtype(denom.dtype, np.integer):
        bins = (p * counts) // denom
    else:
        bins = np.floor(p * counts / denom).astype(np.int64)
    return np.minimum(bins, p - 1)


def observed_distributions(counts, capacities, labeled, p=P_BINS):
    """N x p matrix with one-hot rows for labeled lots and zero rows elsewhere.

    Unlabeled counts are never read; their rows stay zero regardless of input.
    """
    labeled = np.asarray(labeled, dtype=bool)
    counts = np.asarray(counts)
    caps = np.asarray(capacities)
    out = np.zeros((labeled.size, p))
    idx = np.flatnonzero(labeled)
    if idx.size:
        bins = pa_bins(counts[idx], caps[idx], p=p)
        out[idx, bins] = 1.0
    return out


def propconv(features, labeled_neighbor_mask, observed, w_att):
    """x^sp_i = sum over labeled neighbors j of alpha_ij y_j.

    Attention logits use the same dot-product mechanism as the context layer
    but with this module's own projection; the softmax runs over each lot's
    labeled neighbor set only.  No output activation: each row is already a
    convex combination of one-hots, hence a valid distribution.
    """
    mask = np.asarray(labeled_neighbor_mask, dtype=float)
    empty = np.flatnonzero(mask.sum(axis=1) == 0)
    if empty.size:
        raise ValueError(f"empty labeled neighbor set for lot {int(empty[0])}")
    proj = matmul(features, w_att)
    alpha = softmax(matmul(proj, transpose(proj)), mask=mask)
    return matmul(alpha, observed)


def temporal_pa_distribution(head, h_prev):
    """softmax(W_tp h); uniform at the window start where h is zero."""
    return softmax(matmul(h_prev, head.w_tp))


def entropy(dist):
    """-sum x log x with 0 log 0 := 0, natural log."""
    p = np.asarray(dist, dtype=float)
    return float(-(p * np.log(np.maximum(p, 1e-12))).sum())


def entropy_rows(x):
    """Per-row entropy as an (N,1) tensor; differentiable via the clamped log."""
    return scale(reduce_sum(mul(x, log(x)), axis=-1, keepdims=True), -1.0)


def fuse(x_sp, x_tp):
    """Entropy-weighted convex combination of two distributions (numpy)."""
    w_s = math.exp(-entropy(x_sp))
    w_t = math.exp(-entropy(x_tp))
    a = np.asarray(x_sp, dtype=float)
    b = np.asarray(x_tp, dtype=float)
    return (w_s * a + w_t * b) / (w_s + w_t)


_PICK_FIRST = np.array([[1.0], [0.0]])
_PICK_SECOND = np.array([[0.0], [1.0]])


def fuse_rows(x_sp, x_tp):
    """Row-wise entropy fusion inside the graph.

    The normalized weights exp(-H_s)/Z, exp(-H_t)/Z are exactly a two-way
    softmax over the negated entropies, which keeps the whole fusion inside
    the existing primitive set.
    """
    neg_hs = scale(entropy_rows(x_sp), -1.0)
    neg_ht = scale(entropy_rows(x_tp), -1.0)
    weights = softmax(concat([neg_hs, neg_ht]))
    w_s = matmul(weights, constant(_PICK_FIRST))
    w_t = matmul(weights, constant(_PICK_SECOND))
    return add(mul(w_s, x_sp), mul(w_t, x_tp))
