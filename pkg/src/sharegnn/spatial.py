"""Hierarchical spatial layers: contextual and soft-clustering graph convolution.

CxtConv aggregates each lot's road-reachable neighborhood with dot-product
attention recomputed from that step's features.  SCConv pools all lots into K
latent nodes through a row-stochastic soft assignment, convolves once on the
(dense) latent graph, and scatters the result back, so distant lots with a
shared functional role exchange information even without a road-graph path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    leaky_relu,
    matmul,
    parameter,
    softmax,
    transpose,
)

LEAKY_SLOPE = 0.2


def glorot(rng, fan_in, fan_out):
    """Uniform init in +-sqrt(6/(fan_in+fan_out)); keeps early logits moderate."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def default_latent_count(n_lots, ratio=0.1):
    # K tracks city size; never below one latent node
    return max(1, round(ratio * n_lots))


@dataclass
class CxtConvLayer:
    """One attention-weighted aggregation over the context graph.

    w_att projects features into the attention space; w_val transforms the
    aggregated neighborhood.  Both are shared across all lots and edges.
    """

    w_att: Tensor
    w_val: Tensor
    slope: float = LEAKY_SLOPE

    @classmethod
    def init(cls, rng, d_in, d_att, d_out, slope=LEAKY_SLOPE):
        return cls(
            w_att=parameter(glorot(rng, d_in, d_att)),
            w_val=parameter(glorot(rng, d_in, d_out)),
            slope=slope,
        )

    def named_parameters(self, prefix):
        return [(prefix + ".w_att", self.w_att), (prefix + ".w_val", self.w_val)]


@dataclass
class SCConvBlock:
    """Soft-clustering pool/convolve/unpool over K latent nodes."""

    w_assign: Tensor
    w_latent: Tensor
    k: int
    slope: float = LEAKY_SLOPE

    # The latent convolution multiplies pooled features by the unnormalized
    # latent proximity S'AS, whose entries grow with the edge count, so a
    # unit-scale start would pin the downstream recurrent gates at +-1 and
    # zero their float64 gradients.  Starting W_l near (but not at) zero
    # keeps early activations moderate and lets the branch grow as needed.
    LATENT_INIT_SCALE = 1e-3

    @classmethod
    def init(cls, rng, d_in, k, d_out, slope=LEAKY_SLOPE):
        if k < 1:
            raise ValueError("latent node count must be >= 1")
        return cls(
            w_assign=parameter(glorot(rng, d_in, k)),
            w_latent=parameter(glorot(rng, d_in, d_out) * cls.LATENT_INIT_SCALE),
            k=k,
            slope=slope,
        )

    def named_parameters(self, prefix):
        return [
            (prefix + ".w_assign", self.w_assign),
            (prefix + ".w_latent", self.w_latent),
        ]


def attention_proximity(features, adjacency, w_att):
    """Row-normalized attention weights over each lot's neighborhood.

    Proximity scores are dot products in the projected space; non-adjacent
    pairs are excluded from the row softmax, so row i is a distribution over
    lot i's neighbors only.  Recomputed at every time step from fresh features.
    """
    proj = matmul(features, w_att)
    scores = matmul(proj, transpose(proj))
    return softmax(scores, mask=np.asarray(adjacency, dtype=float))


def cxtconv_layer(layer, features, adjacency):
    """x_i' = LeakyReLU(sum_j alpha_ij W_c x_j) over the context neighborhood."""
    alpha = attention_proximity(features, adjacency, layer.w_att)
    agg = matmul(alpha, matmul(features, layer.w_val))
    return leaky_relu(agg, layer.slope)


def soft_assignment(block, features):
    """Row-stochastic N x K membership: S_i = softmax(W_s x_i)."""
    return softmax(matmul(features, block.w_assign))


def latent_pool(assignment, features, adjacency):
    """Pool lot features and edges up to the latent graph.

    X^s = S^T X; alpha^s = S^T A S for whatever lot adjacency A the caller
    supplies.  The model passes the row-normalized context matrix so the
    latent proximity keeps a size-independent scale (see forward_window).
    """
    st = transpose(assignment)
    pooled = matmul(st, features)
    latent_adj = matmul(matmul(st, adjacency), assignment)
    return pooled, latent_adj


def scconv_unpool(block, pooled, latent_adj, assignment):
    """Convolve on the complete latent graph, then scatter back to lots."""
    latent = leaky_relu(matmul(matmul(latent_adj, pooled), block.w_latent), block.slope)
    return matmul(assignment, latent)


def scconv(block, features, adjacency):
    """Full pool -> latent convolution -> unpool pipeline (one layer)."""
    s = soft_assignment(block, features)
    pooled, latent_adj = latent_pool(s, features, adjacency)
    return scconv_unpool(block, pooled, latent_adj, s)
