"""Semi-supervised hierarchical recurrent graph network for city-wide
parking-availability prediction, with a synthetic-city data generator and a
self-contained reverse-mode differentiation core."""

from .autodiff import ComputationRecord, ShapeError, Tensor, backward, primitive_forward
from .optim import Adam, adam_step
from .gradcheck import finite_difference_oracle, max_relative_error
from .graph import CityGraph, ParkingLot, RoadNetwork, build_city_graph
from .data import (
    CitySpec,
    ParkingDataset,
    SeriesSpec,
    generate_city,
    generate_observations,
    load_dataset,
    save_dataset,
)
from .model import ModelParams, Variant, compute_losses, forward_window
from .training import TrainConfig, TrainResult, evaluate, fit_city, train
from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .estimator import SharePredictor

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CityGraph",
    "CitySpec",
    "ComputationRecord",
    "ModelParams",
    "ParkingDataset",
    "ParkingLot",
    "RoadNetwork",
    "SeriesSpec",
    "ShapeError",
    "SharePredictor",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "Variant",
    "adam_step",
    "backward",
    "build_city_graph",
    "compute_losses",
    "evaluate",
    "finite_difference_oracle",
    "fit_city",
    "forward_window",
    "generate_city",
    "generate_observations",
    "load_checkpoint",
    "load_dataset",
    "max_relative_error",
    "primitive_forward",
    "restore_model",
    "save_checkpoint",
    "save_dataset",
    "train",
    "__version__",
]
