"""Minimal dense-tensor neural network engine (numpy arrays, analytic backprop)."""

from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    MaxPool,
    ParallelConcat,
    ReLU,
    Sequential,
    Sigmoid,
    conv_output_size,
)
from .losses import weighted_bce, weighted_bce_grad
from .network import MultiTowerNet
from .optim import Adam

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "LeakyReLU",
    "MaxPool",
    "MultiTowerNet",
    "ParallelConcat",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "conv_output_size",
    "weighted_bce",
    "weighted_bce_grad",
]
