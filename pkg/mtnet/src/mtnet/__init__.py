"""Joint semantic segmentation and residual depth refinement.

A two-branch encoder-decoder network that eats an RGB frame plus the
raw depth map a stereo matcher produced, and emits a per-class score
map and a corrected depth map. Maps are exchanged with the
reconstruction pipeline purely through files; see ``mtnet.io``.
"""

from .config import ConfigError, NetConfig, TrainConfig
from .data import DataError, FrameSet, load_training_set
from .infer import infer_sequence, refine_frame
from .model import MultiTaskNet, build
from .train import fit, load_checkpoint, save_checkpoint, train

__all__ = [
    "ConfigError", "NetConfig", "TrainConfig",
    "DataError", "FrameSet", "load_training_set",
    "MultiTaskNet", "build",
    "fit", "train", "save_checkpoint", "load_checkpoint",
    "infer_sequence", "refine_frame",
]
