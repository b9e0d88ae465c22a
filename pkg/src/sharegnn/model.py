"""Full model assembly: per-step spatial encoding, PA fusion, recurrence.

Each window runs T steps.  A step encodes the current features over the
context graph (two attention layers), approximates every lot's PA
distribution spatially (propagation from labeled neighbors) and temporally
(readout of the previous hidden state), fuses the two by entropy, pools the
combined representation through the latent soft-clustering layer, and feeds
the concatenated segments to a shared GRU.  The final hidden state emits all
tau horizons at once.

Ablation variants drop whole segments: CAGNN removes the latent pooling,
CxtGNN additionally removes the PA approximation, and the GRU-only variant
feeds raw features straight to the recurrence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .approx import (
    TemporalHeadParams,
    fuse_rows,
    observed_distributions,
    propconv,
    temporal_pa_distribution,
)
from .autodiff import (
    Tensor,
    add,
    concat,
    constant,
    log,
    mul,
    parameter,
    reduce_sum,
    scale,
    sub,
    transpose,
)
from .spatial import CxtConvLayer, SCConvBlock, cxtconv_layer, glorot, scconv
from .temporal import GruParams, PredictionHead, gru_cell, initial_hidden, predict_head

_S_PARAMS = 100  # init stream id, disjoint from the data generator's streams


class Variant(enum.Enum):
    SHARE = "share"
    CAGNN = "cagnn"
    CXTGNN = "cxtgnn"
    GRU_ONLY = "gru-only"

    @property
    def uses_context(self):
        return self is not Variant.GRU_ONLY

    @property
    def uses_approx(self):
        return self in (Variant.SHARE, Variant.CAGNN)

    @property
    def uses_clustering(self):
        return self is Variant.SHARE

    @classmethod
    def parse(cls, name: str) -> "Variant":
        for v in cls:
            if v.value == name:
                return v
        raise ValueError(
            f"unknown variant {name!r}; expected one of "
            + ", ".join(v.value for v in cls)
        )


@dataclass
class ModelParams:
    variant: Variant
    n_features: int
    hidden: int
    p_bins: int
    latent: int
    horizons: int
    slope: float
    cxt1: Optional[CxtConvLayer]
    cxt2: Optional[CxtConvLayer]
    cluster: Optional[SCConvBlock]
    prop_w_att: Optional[Tensor]
    tp_head: Optional[TemporalHeadParams]
    gru: GruParams
    head: PredictionHead

    @classmethod
    def init(cls, seed, variant, n_features, hidden=32, p_bins=50, latent=1,
             horizons=3, slope=0.2):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence((seed, _S_PARAMS)))
        )
        d = hidden
        cxt1 = cxt2 = cluster = None
        prop_w_att = tp_head = None
        gru_width = n_features
        if variant.uses_context:
            cxt1 = CxtConvLayer.init(rng, n_features, d, d, slope)
            cxt2 = CxtConvLayer.init(rng, d, d, d, slope)
            gru_width = d
        if variant.uses_approx:
            prop_w_att = parameter(glorot(rng, n_features, d))
            tp_head = TemporalHeadParams.init(rng, d, p_bins)
            gru_width += p_bins
        if variant.uses_clustering:
            cluster = SCConvBlock.init(rng, d + p_bins, latent, d, slope)
            gru_width += d
        gru = GruParams.init(rng, d, gru_width)
        head = PredictionHead.init(rng, d, horizons)
        return cls(
            variant=variant,
            n_features=n_features,
            hidden=d,
            p_bins=p_bins,
            latent=latent,
            horizons=horizons,
            slope=slope,
            cxt1=cxt1,
            cxt2=cxt2,
            cluster=cluster,
            prop_w_att=prop_w_att,
            tp_head=tp_head,
            gru=gru,
            head=head,
        )

    def named_parameters(self):
        out = []
        if self.cxt1 is not None:
            out += self.cxt1.named_parameters("cxt1")
            out += self.cxt2.named_parameters("cxt2")
        if self.cluster is not None:
            out += self.cluster.named_parameters("cluster")
        if self.prop_w_att is not None:
            out.append(("prop.w_att", self.prop_w_att))
        if self.tp_head is not None:
            out += self.tp_head.named_parameters("tp")
        out += self.gru.named_parameters("gru")
        out += self.head.named_parameters("head")
        return out

    def parameter_groups(self):
        """Module label per parameter, for grouped gradient reports."""
        groups = {}
        for name, _t in self.named_parameters():
            groups.setdefault(name.split(".")[0], []).append(name)
        return groups


@dataclass
class ForwardResult:
    predictions: Tensor  # tau x N, normalized to (0,1)
    spatial_dists: List[Tensor]  # per input step, N x p (empty without approx)
    temporal_dists: List[Tensor]


def forward_window(params: ModelParams, sample, graph) -> ForwardResult:
    """Run one window through the variant's active modules."""
    n = graph.n_lots
    t_steps = sample.features.shape[0]
    if sample.features.shape[1] != n:
        raise ValueError(
            f"sample has {sample.features.shape[1]} lots, graph has {n}"
        )
    if sample.features.shape[2] != params.n_features:
        raise ValueError(
            f"sample feature width {sample.features.shape[2]} does not match "
            f"model width {params.n_features}"
        )
    caps = graph.capacities
    labeled = graph.labeled_flags
    unlabeled_col = constant((~labeled).astype(float)[:, None])
    # The latent pooling uses the neighborhood-mass fractions, not raw edge
    # counts: with the binary matrix the pooled proximity scales with the
    # total edge count, which drives the recurrent gates into the flat tails
    # of sigmoid/tanh where float64 gradients vanish, and the soft-cluster
    # branch then never trains.  Row-normalizing keeps the latent graph's
    # magnitude independent of city size and density.
    ctx_norm = graph.ctx_mask / graph.ctx_mask.sum(axis=1, keepdims=True)
    ctx = constant(ctx_norm)

    h = constant(initial_hidden(n, params.hidden))
    spatial_dists: List[Tensor] = []
    temporal_dists: List[Tensor] = []
    for t in range(t_steps):
        feats = constant(sample.features[t])
        segments = []
        x_cxt = None
        if params.variant.uses_context:
            x_cxt = cxtconv_layer(params.cxt1, feats, graph.ctx_mask)
            x_cxt = cxtconv_layer(params.cxt2, x_cxt, graph.ctx_mask)
            segments.append(x_cxt)
        if params.variant.uses_approx:
            observed = observed_distributions(
                sample.pa[t], caps, labeled, p=params.p_bins
            )
            x_sp = propconv(feats, graph.prop_agg_mask, constant(observed), params.prop_w_att)
            x_tp = temporal_pa_distribution(params.tp_head, h)
            spatial_dists.append(x_sp)
            temporal_dists.append(x_tp)
            fused = fuse_rows(x_sp, x_tp)
            # observed lots keep their ground-truth one-hot downstream; the
            # fused estimate still trains through the distribution losses
            x_pa = add(mul(fused, unlabeled_col), constant(observed))
            if params.variant.uses_clustering:
                segments.append(scconv(params.cluster, concat([x_cxt, x_pa]), ctx))
            segments.append(x_pa)
        if not segments:
            segments.append(feats)
        gru_in = segments[0] if len(segments) == 1 else concat(segments)
        h = gru_cell(params.gru, h, gru_in)

    predictions = transpose(predict_head(params.head, h))
    return ForwardResult(
        predictions=predictions,
        spatial_dists=spatial_dists,
        temporal_dists=temporal_dists,
    )


@dataclass
class LossTerms:
    o1: Tensor
    o2: Optional[Tensor]
    o3: Optional[Tensor]
    total: Tensor

    def values(self):
        return {
            "o1": float(self.o1.values),
            "o2": float(self.o2.values) if self.o2 is not None else 0.0,
            "o3": float(self.o3.values) if self.o3 is not None else 0.0,
            "total": float(self.total.values),
        }


def _distribution_loss(dists, observed_per_step, n_labeled, all_steps):
    """Mean cross-entropy between observed one-hots and predicted rows.

    Unlabeled rows of the observed matrix are all-zero, so they contribute
    exactly nothing; the mean runs over labeled lots only.
    """
    steps = range(len(dists)) if all_steps else [len(dists) - 1]
    acc = None
    for t in steps:
        ce = scale(
            reduce_sum(mul(constant(observed_per_step[t]), log(dists[t]))),
            -1.0 / n_labeled,
        )
        acc = ce if acc is None else add(acc, ce)
    return scale(acc, 1.0 / len(list(steps)))


def compute_losses(result: ForwardResult, sample, graph, beta=0.5,
                   p_bins=50, all_steps=False) -> LossTerms:
    labeled = graph.labeled_flags
    n_labeled = int(labeled.sum())
    if n_labeled == 0:
        raise ValueError("no labeled lot in sample; losses undefined")
    caps = graph.capacities.astype(float)
    horizon = sample.targets.shape[0]

    targets_norm = sample.targets / caps[None, :]
    label_row = constant(labeled.astype(float)[None, :])
    diff = mul(sub(result.predictions, constant(targets_norm)), label_row)
    o1 = scale(reduce_sum(mul(diff, diff)), 1.0 / (horizon * n_labeled))

    if not result.spatial_dists:
        return LossTerms(o1=o1, o2=None, o3=None, total=o1)

    observed = [
        observed_distributions(sample.pa[t], graph.capacities, labeled, p=p_bins)
        for t in range(sample.pa.shape[0])
    ]
    o2 = _distribution_loss(result.spatial_dists, observed, n_labeled, all_steps)
    o3 = _distribution_loss(result.temporal_dists, observed, n_labeled, all_steps)
    total = add(o1, scale(add(o2, o3), beta))
    return LossTerms(o1=o1, o2=o2, o3=o3, total=total)


def predictions_to_counts(predictions, capacities):
    """Denormalize sigmoid outputs back to absolute vacancy counts."""
    vals = predictions.values if isinstance(predictions, Tensor) else predictions
    return vals * np.asarray(capacities, dtype=float)[None, :]
