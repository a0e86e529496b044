"""Suggestion-mining classifiers built on a small numpy autodiff core."""

from .encoders import BISRU, CNN_MAXPOOL, SUBTASK_A, SUBTASK_B, BranchConfig, JointEncoder, ModelConfig
from .model import JessiModel, load_model, save_model
from .training import TrainConfig, ensemble_predict, ensemble_select, kfold_train, train_model

__version__ = "0.1.0"

__all__ = [
    "BISRU", "CNN_MAXPOOL", "SUBTASK_A", "SUBTASK_B", "BranchConfig", "JessiModel", "JointEncoder",
    "ModelConfig", "TrainConfig", "ensemble_predict", "ensemble_select", "kfold_train", "load_model",
    "save_model", "train_model",
]
