"""Minimal NumPy convolutional network trainer used as the fitness evaluator."""

from ..arch import forward_shape
from .gradcheck import check_layer, check_network, relative_error
from .layers import softmax, softmax_cross_entropy
from .network import Network, WeightFileError
from .train import TrainConfig, TrainingDiverged, TrainingEvaluator, evaluate, train

__all__ = [
    "Network", "TrainConfig", "TrainingDiverged", "TrainingEvaluator", "WeightFileError",
    "check_layer", "check_network", "evaluate", "forward_shape", "relative_error",
    "softmax", "softmax_cross_entropy", "train",
]
