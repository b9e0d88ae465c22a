"""Scikit-learn style wrapper around graph construction and training.

The estimator treats a ParkingDataset as its `X`: fit() builds the city
graph, initializes the requested variant, and trains with early stopping on
the validation split; predict() emits denormalized vacancy counts.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .graph import build_city_graph
from .model import ModelParams, forward_window, predictions_to_counts
from .autodiff import no_recording
from .training import TrainConfig, evaluate, train
from .validation import (
    ensure_dataset,
    ensure_non_negative,
    ensure_non_negative_int,
    ensure_positive_int,
    ensure_unit_fraction,
    ensure_variant,
)


class SharePredictor(BaseEstimator):
    """Semi-supervised multi-horizon parking availability predictor.

    Parameters mirror the model defaults: 12-step windows predicting 3
    horizons, 32-wide hidden state, 50 distribution bins, one latent node
    per ten lots, 1 km neighborhood, 10 nearest labeled lots.
    """

    def __init__(self, variant="share", hidden=32, p_bins=50, latent_ratio=0.1,
                 latent=None, eps_km=1.0, k_nn=10, slope=0.2, beta=0.5,
                 lr=0.001, epochs=200, patience=10, windows_per_epoch=0,
                 val_windows=0, all_steps_losses=False, seed=0):
        self.variant = variant
        self.hidden = hidden
        self.p_bins = p_bins
        self.latent_ratio = latent_ratio
        self.latent = latent
        self.eps_km = eps_km
        self.k_nn = k_nn
        self.slope = slope
        self.beta = beta
        self.lr = lr
        self.epochs = epochs
        self.patience = patience
        self.windows_per_epoch = windows_per_epoch
        self.val_windows = val_windows
        self.all_steps_losses = all_steps_losses
        self.seed = seed

    def _train_config(self):
        return TrainConfig(
            epochs=ensure_positive_int("epochs", self.epochs),
            patience=ensure_positive_int("patience", self.patience),
            lr=ensure_non_negative("lr", self.lr),
            beta=ensure_non_negative("beta", self.beta),
            windows_per_epoch=ensure_non_negative_int(
                "windows_per_epoch", self.windows_per_epoch
            ),
            val_windows=ensure_non_negative_int("val_windows", self.val_windows),
            all_steps_losses=bool(self.all_steps_losses),
            seed=int(self.seed),
        )

    def fit(self, dataset, y=None, log=None):
        """Train on the dataset's chronological train/val splits."""
        ensure_dataset(dataset)
        variant = ensure_variant(self.variant)
        config = self._train_config()
        city = dataset.city
        graph = build_city_graph(
            city.lots, city.net, eps_km=float(self.eps_km),
            k_nn=ensure_positive_int("k_nn", self.k_nn),
        )
        if self.latent is not None:
            latent = ensure_positive_int("latent", self.latent)
        else:
            ratio = ensure_unit_fraction("latent_ratio", self.latent_ratio)
            latent = max(1, round(ratio * city.n_lots))
        params = ModelParams.init(
            int(self.seed), variant, dataset.features.shape[2],
            hidden=ensure_positive_int("hidden", self.hidden),
            p_bins=ensure_positive_int("p_bins", self.p_bins),
            latent=latent, horizons=dataset.horizon, slope=float(self.slope),
        )
        result = train(params, dataset, graph, config, log=log)
        self.params_ = params
        self.graph_ = graph
        self.train_result_ = result
        self.n_features_in_ = dataset.features.shape[2]
        return self

    def _check_compatible(self, dataset):
        ensure_dataset(dataset)
        if dataset.city.n_lots != self.graph_.n_lots:
            raise ValueError(
                f"dataset has {dataset.city.n_lots} lots, model was fit on "
                f"{self.graph_.n_lots}"
            )
        if dataset.features.shape[2] != self.n_features_in_:
            raise ValueError("dataset feature width differs from the fitted one")

    def predict_window(self, sample):
        """Vacancy counts, horizons x lots, for one window sample."""
        check_is_fitted(self, "params_")
        with no_recording():
            result = forward_window(self.params_, sample, self.graph_)
        return predictions_to_counts(result.predictions, self.graph_.capacities)

    def predict(self, dataset, split="test"):
        """Stacked vacancy counts (windows x horizons x lots) for a split."""
        check_is_fitted(self, "params_")
        self._check_compatible(dataset)
        n = dataset.n_windows(split)
        if n == 0:
            raise ValueError(f"empty split: {split!r} has no windows")
        return np.stack(
            [self.predict_window(dataset.sample(split, i)) for i in range(n)]
        )

    def evaluate(self, dataset, split="test", max_windows=0):
        check_is_fitted(self, "params_")
        self._check_compatible(dataset)
        report, losses = evaluate(
            self.params_, dataset, self.graph_, split, beta=float(self.beta),
            max_windows=max_windows, all_steps_losses=bool(self.all_steps_losses),
        )
        return report, losses

    def score(self, dataset, y=None, split="test"):
        """Negative all-lot MAE, so larger is better as sklearn expects."""
        report, _ = self.evaluate(dataset, split=split)
        tallies = [t for t in (report.labeled, report.unlabeled) if t.count.sum() > 0]
        total_abs = sum(t.abs_sum.sum() for t in tallies)
        total_n = sum(t.count.sum() for t in tallies)
        return -float(total_abs / total_n)
