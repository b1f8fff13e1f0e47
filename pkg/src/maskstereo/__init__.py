"""Mask-augmented RGB/LWIR stereo disparity with a dual-trunk patch network."""

__version__ = "0.1.0"

from .model import ModelParams, forward_pair, load_checkpoint, save_checkpoint
from .patches import GroundTruthPoint, PaddedPlanes, SpectralFrame
from .training import TrainConfig, train
from .disparity import estimate, score_candidates
from .evaluation import aggregate, recall

__all__ = [
    "GroundTruthPoint",
    "ModelParams",
    "PaddedPlanes",
    "SpectralFrame",
    "TrainConfig",
    "aggregate",
    "estimate",
    "forward_pair",
    "load_checkpoint",
    "recall",
    "save_checkpoint",
    "score_candidates",
    "train",
]
