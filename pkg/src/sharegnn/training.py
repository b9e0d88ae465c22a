"""Training loop, early stopping, evaluation, and the metrics log.

One window is one optimizer step (a full-graph batch).  Everything is
deterministic for a fixed seed: window order comes from a dedicated Philox
stream, evaluation subsets are evenly spaced rather than sampled, and metric
rows are formatted with full float precision so two identical runs produce
byte-identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .graph import build_city_graph
from .model import ModelParams, compute_losses, forward_window, predictions_to_counts
from .autodiff import backward, no_recording
from .optim import Adam

_S_BATCH_ORDER = 200  # window shuffling stream, disjoint from data/init streams


@dataclass
class TrainConfig:
    epochs: int = 200
    patience: int = 10
    lr: float = 0.001
    beta: float = 0.5
    windows_per_epoch: int = 0  # 0 = every training window each epoch
    val_windows: int = 0  # 0 = every validation window
    all_steps_losses: bool = False
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")


METRICS_HEADER = "epoch,split,horizon,lot_class,mae,rmse,o1,o2,o3"


def _fmt(x):
    return f"{float(x):.17g}"


def metrics_row(epoch, split, horizon, lot_class, mae, rmse, o1, o2, o3):
    return ",".join(
        [str(epoch), split, str(horizon), lot_class]
        + [_fmt(v) for v in (mae, rmse, o1, o2, o3)]
    )


class NonFiniteLoss(RuntimeError):
    pass


def _check_finite(terms, epoch, window_idx):
    for name in ("o1", "o2", "o3"):
        v = terms[name]
        if not np.isfinite(v):
            raise NonFiniteLoss(
                f"non-finite loss term {name} = {v} at epoch {epoch}, window {window_idx}"
            )


def _spread_indices(total, count):
    """Evenly spaced deterministic subset; all indices when count is 0."""
    if count <= 0 or count >= total:
        return list(range(total))
    return sorted(set(np.linspace(0, total - 1, count).round().astype(int).tolist()))


@dataclass
class ErrorTally:
    """Streaming per-horizon absolute/squared error sums for one lot class."""

    abs_sum: np.ndarray
    sq_sum: np.ndarray
    count: np.ndarray

    @classmethod
    def empty(cls, horizons):
        return cls(np.zeros(horizons), np.zeros(horizons), np.zeros(horizons))

    def add(self, pred_counts, true_counts, columns):
        if columns.size == 0:
            return
        err = pred_counts[:, columns] - true_counts[:, columns]
        self.abs_sum += np.abs(err).sum(axis=1)
        self.sq_sum += (err**2).sum(axis=1)
        self.count += columns.size

    def mae(self, horizon=None):
        if horizon is None:
            return float(self.abs_sum.sum() / self.count.sum())
        return float(self.abs_sum[horizon] / self.count[horizon])

    def rmse(self, horizon=None):
        if horizon is None:
            return float(np.sqrt(self.sq_sum.sum() / self.count.sum()))
        return float(np.sqrt(self.sq_sum[horizon] / self.count[horizon]))


@dataclass
class EvalReport:
    horizons: int
    labeled: ErrorTally
    unlabeled: ErrorTally
    n_windows: int

    def rows(self, epoch, split):
        out = []
        for cls_name, tally in (("labeled", self.labeled), ("unlabeled", self.unlabeled)):
            if tally.count.sum() == 0:
                continue
            for h in range(self.horizons):
                out.append(
                    metrics_row(epoch, split, h + 1, cls_name,
                                tally.mae(h), tally.rmse(h), 0.0, 0.0, 0.0)
                )
            out.append(
                metrics_row(epoch, split, "all", cls_name,
                            tally.mae(), tally.rmse(), 0.0, 0.0, 0.0)
            )
        return out


def evaluate(params: ModelParams, dataset, graph, split, beta=0.5,
             max_windows=0, all_steps_losses=False) -> Tuple[EvalReport, Dict[str, float]]:
    """Denormalized MAE/RMSE per horizon, split by sensor coverage.

    Also returns the mean loss terms over the evaluated windows (computed on
    labeled lots, as in training).
    """
    total = dataset.n_windows(split)
    if total == 0:
        raise ValueError(f"empty split: {split!r} has no windows")
    indices = _spread_indices(total, max_windows)
    labeled_cols = np.flatnonzero(graph.labeled_flags)
    unlabeled_cols = np.flatnonzero(~graph.labeled_flags)
    caps = graph.capacities

    report = EvalReport(
        horizons=params.horizons,
        labeled=ErrorTally.empty(params.horizons),
        unlabeled=ErrorTally.empty(params.horizons),
        n_windows=len(indices),
    )
    loss_sums = {"o1": 0.0, "o2": 0.0, "o3": 0.0, "total": 0.0}
    with no_recording():
        for idx in indices:
            sample = dataset.sample(split, idx)
            result = forward_window(params, sample, graph)
            terms = compute_losses(
                result, sample, graph, beta=beta, p_bins=params.p_bins,
                all_steps=all_steps_losses,
            ).values()
            for k in loss_sums:
                loss_sums[k] += terms[k]
            pred_counts = predictions_to_counts(result.predictions, caps)
            truth = sample.targets.astype(float)
            report.labeled.add(pred_counts, truth, labeled_cols)
            report.unlabeled.add(pred_counts, truth, unlabeled_cols)
    mean_losses = {k: v / len(indices) for k, v in loss_sums.items()}
    return report, mean_losses


@dataclass
class TrainResult:
    params: ModelParams
    metrics_rows: List[str] = field(default_factory=list)
    best_epoch: int = -1
    best_val_o1: float = float("inf")
    epochs_run: int = 0

    def metrics_text(self):
        return "\n".join([METRICS_HEADER] + self.metrics_rows) + "\n"


def _snapshot(params):
    return [t.values.copy() for _n, t in params.named_parameters()]


def _restore(params, snapshot):
    for (_n, t), values in zip(params.named_parameters(), snapshot):
        t.values[...] = values


def train(params: ModelParams, dataset, graph, config: TrainConfig,
          log=None) -> TrainResult:
    config.validate()
    named = params.named_parameters()
    opt = Adam(named, lr=config.lr)
    order_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((config.seed, _S_BATCH_ORDER)))
    )
    n_train = dataset.n_windows("train")
    if n_train == 0:
        raise ValueError("empty split: 'train' has no windows")
    n_val = dataset.n_windows("val")
    horizons = params.horizons
    labeled_cols = np.flatnonzero(graph.labeled_flags)
    caps = graph.capacities

    result = TrainResult(params=params)
    best = _snapshot(params)
    stale = 0
    for epoch in range(config.epochs):
        perm = order_rng.permutation(n_train)
        if 0 < config.windows_per_epoch < n_train:
            perm = perm[: config.windows_per_epoch]
        train_losses = {"o1": 0.0, "o2": 0.0, "o3": 0.0}
        train_tally = ErrorTally.empty(horizons)
        for idx in perm:
            sample = dataset.sample("train", int(idx))
            fwd = forward_window(params, sample, graph)
            losses = compute_losses(
                fwd, sample, graph, beta=config.beta, p_bins=params.p_bins,
                all_steps=config.all_steps_losses,
            )
            terms = losses.values()
            _check_finite(terms, epoch, int(idx))
            opt.zero_grad()
            backward(losses.total)
            opt.step()
            for k in train_losses:
                train_losses[k] += terms[k]
            train_tally.add(
                predictions_to_counts(fwd.predictions, caps),
                sample.targets.astype(float),
                labeled_cols,
            )
        n_used = len(perm)
        mean_train = {k: v / n_used for k, v in train_losses.items()}
        result.metrics_rows.append(
            metrics_row(epoch, "train", "all", "labeled",
                        train_tally.mae(), train_tally.rmse(),
                        mean_train["o1"], mean_train["o2"], mean_train["o3"])
        )

        if n_val > 0:
            report, val_losses = evaluate(
                params, dataset, graph, "val", beta=config.beta,
                max_windows=config.val_windows,
                all_steps_losses=config.all_steps_losses,
            )
            result.metrics_rows.append(
                metrics_row(epoch, "val", "all", "labeled",
                            report.labeled.mae(), report.labeled.rmse(),
                            val_losses["o1"], val_losses["o2"], val_losses["o3"])
            )
            if log:
                log(f"epoch {epoch}: train O1 {mean_train['o1']:.6f}, "
                    f"val O1 {val_losses['o1']:.6f}")
            if val_losses["o1"] < result.best_val_o1 - 1e-12:
                result.best_val_o1 = val_losses["o1"]
                result.best_epoch = epoch
                best = _snapshot(params)
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    result.epochs_run = epoch + 1
                    break
        else:
            if log:
                log(f"epoch {epoch}: train O1 {mean_train['o1']:.6f}")
            result.best_epoch = epoch
        result.epochs_run = epoch + 1

    if n_val > 0:
        _restore(params, best)
    return result


def fit_city(city, series, dataset, config: TrainConfig, variant,
             hidden=32, p_bins=50, latent_ratio=0.1, latent: Optional[int] = None,
             eps_km=1.0, k_nn=10, horizons=3, slope=0.2, log=None):
    """Build graph and params for a dataset and train; returns (params, graph, result)."""
    graph = build_city_graph(city.lots, city.net, eps_km=eps_km, k_nn=k_nn)
    if latent is None:
        latent = max(1, round(latent_ratio * city.n_lots))
    params = ModelParams.init(
        config.seed, variant, dataset.features.shape[2], hidden=hidden,
        p_bins=p_bins, latent=latent, horizons=horizons, slope=slope,
    )
    result = train(params, dataset, graph, config, log=log)
    return params, graph, result
