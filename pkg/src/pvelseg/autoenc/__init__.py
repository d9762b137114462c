"""Convolutional autoencoder built directly on numpy arrays."""

from .layers import Conv2D, Deconv2D, Dense, Flatten, Reshape
from .model import LayerSpec, Model, build_model
from .modelio import ModelFormatError, load_model, save_model
from .train import TrainConfig, TrainReport, TrainingDivergedError, train

__all__ = [
    "Conv2D", "Deconv2D", "Dense", "Flatten", "Reshape",
    "LayerSpec", "Model", "build_model",
    "ModelFormatError", "load_model", "save_model",
    "TrainConfig", "TrainReport", "TrainingDivergedError", "train",
]
