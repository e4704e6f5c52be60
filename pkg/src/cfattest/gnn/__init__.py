"""Graph neural network core: VGAE model, gradients, optimizer and training."""

from .metrics import ap_auc
from .model import (LATENT, GraphTensors, LatentSample, Noise, VgaeModel, count_parameters,
                    decode_loss, encode, forward, loss_and_grads)
from .optim import AdamState, StepDecay, adam_step
from .sparse import normalize_adjacency
from .train import EarlyStopping, TrainConfig, TrainResult, sample_negatives, train

__all__ = [
    "LATENT", "GraphTensors", "LatentSample", "Noise", "VgaeModel", "count_parameters",
    "decode_loss", "encode", "forward", "loss_and_grads", "AdamState", "StepDecay",
    "adam_step", "ap_auc", "normalize_adjacency", "EarlyStopping", "TrainConfig",
    "TrainResult", "sample_negatives", "train",
]
