"""Legendre-memory plus Fourier-mode forecaster in numpy."""

from .data import SplitSpec, TimeSeriesTable, WindowSet, load_csv, split, standardize
from .legendre import build_eval_matrix, build_transition, discretize_bilinear, lpu, project, reconstruct
from .model import FiLMConfig, FiLMParams, film_forward, load_checkpoint, save_checkpoint
from .spectral import SpectralWeights, fel_forward, select_modes
from .training import TrainConfig, backward, train

__all__ = [
    "FiLMConfig",
    "FiLMParams",
    "SpectralWeights",
    "SplitSpec",
    "TimeSeriesTable",
    "TrainConfig",
    "WindowSet",
    "backward",
    "build_eval_matrix",
    "build_transition",
    "discretize_bilinear",
    "fel_forward",
    "film_forward",
    "load_checkpoint",
    "load_csv",
    "lpu",
    "project",
    "reconstruct",
    "save_checkpoint",
    "select_modes",
    "split",
    "standardize",
    "train",
]
