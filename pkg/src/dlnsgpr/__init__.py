"""Remaining useful life prediction: deep network features smoothed by a nonstationary GP."""

__version__ = "0.1.0"

from .cmapss import (
    FeatureScaler,
    NormStats,
    TrajectorySet,
    attach_testing_labels,
    attach_training_labels,
    read_rul,
    read_trajectories,
)
from .gp import KernelParams, NonstationaryGPR
from .mlp import DeepRULRegressor
from .pipeline import DLNSGPR, RulPrediction
from .svd import TruncatedSVDFeatures

__all__ = [
    "DLNSGPR",
    "DeepRULRegressor",
    "FeatureScaler",
    "KernelParams",
    "NonstationaryGPR",
    "NormStats",
    "RulPrediction",
    "TrajectorySet",
    "TruncatedSVDFeatures",
    "attach_testing_labels",
    "attach_training_labels",
    "read_rul",
    "read_trajectories",
]
