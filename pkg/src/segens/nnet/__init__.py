"""Desk-scale segmentation network, activation zoo, trainer and synthetic data."""

from .activations import (
    KINDS,
    Activation,
    activation_backward,
    activation_forward,
    default_pool,
    stochastic_select,
)
from .data import synth_dataset
from .model import FcnModel, read_weights, softmax, write_weights
from .train import History, TrainConfig, TrainingDiverged, dataset_dice, mean_loss, train

__all__ = [
    "KINDS",
    "Activation",
    "FcnModel",
    "History",
    "TrainConfig",
    "TrainingDiverged",
    "activation_backward",
    "activation_forward",
    "dataset_dice",
    "default_pool",
    "mean_loss",
    "read_weights",
    "softmax",
    "stochastic_select",
    "synth_dataset",
    "train",
    "write_weights",
]
