from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ForwardTrace,
    Gradients,
    ModelParams,
    cross_entropy,
    forward,
    init_params,
    loss_and_backward,
    segment_max,
    softmax,
)
from .ops import BatchedGraphs, NormalizedAdjacency, gcn_layer, make_batch, normalize, relu
from .train import Adam, TrainConfig, TrainingDiverged, TrainResult, predict, prepare, train

__all__ = [
    "Adam", "BatchedGraphs", "ForwardTrace", "Gradients", "ModelParams", "NormalizedAdjacency",
    "TrainConfig", "TrainResult", "TrainingDiverged", "cross_entropy", "forward", "gcn_layer",
    "init_params", "load_checkpoint", "loss_and_backward", "make_batch", "normalize", "predict",
    "prepare", "relu", "save_checkpoint", "segment_max", "softmax", "train",
]
