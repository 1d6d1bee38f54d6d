"""Handwriting-based Parkinson's screening: preprocessing, an LSTM + 1D-CNN
patch classifier with exact gradients, subject-level cross-validation,
majority-vote diagnosis, metrics and complexity accounting."""
from .kernels import BACKEND
from .model import ModelConfig
from .signal import SegmentationConfig
from .synth import SynthConfig
from .train import TrainConfig

__version__ = "0.1.0"

__all__ = ["BACKEND", "ModelConfig", "SegmentationConfig", "SynthConfig", "TrainConfig", "__version__"]
