"""Small from-scratch convolutional network stack (numpy only)."""

from .layers import softmax, softmax_cross_entropy
from .model import (
    PRESET_STAGE_CONVS,
    STAGE_WIDTHS,
    ArchConfig,
    Model,
    load_checkpoint,
    make_arch,
    save_checkpoint,
)
from .train import TrainConfig, evaluate, train, write_history_csv

__all__ = [
    "PRESET_STAGE_CONVS",
    "STAGE_WIDTHS",
    "ArchConfig",
    "Model",
    "TrainConfig",
    "evaluate",
    "load_checkpoint",
    "make_arch",
    "save_checkpoint",
    "softmax",
    "softmax_cross_entropy",
    "train",
    "write_history_csv",
]
