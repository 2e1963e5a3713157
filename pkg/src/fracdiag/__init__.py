"""Fault diagnosis for grid-tied inverters from single-point V/P/Q measurements.

Fractional-order feature channels feed a two-level classifier trained with a
staged adversarial curriculum.
"""

from ._backend import BACKEND
from .attacks import AttackKind, AttackSpec, PgdConfig, apply_attack, pgd_attack
from .datafile import load_dataset, save_dataset
from .evaluate import Metrics, SplitSpec, evaluate, run_ablation, split, sweep
from .fracfeat import FracConfig, caputo_derivative, extract_features, gl_derivative
from .model import HierModel, MlpParams, init_params
from .pmrat import TrainConfig, Variant, run_curriculum, train_ablation
from .signalgen import Dataset, GridConfig, HierLabel, Window, generate_dataset, generate_window

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AttackKind",
    "AttackSpec",
    "Dataset",
    "FracConfig",
    "GridConfig",
    "HierLabel",
    "HierModel",
    "Metrics",
    "MlpParams",
    "PgdConfig",
    "SplitSpec",
    "TrainConfig",
    "Variant",
    "Window",
    "apply_attack",
    "caputo_derivative",
    "evaluate",
    "extract_features",
    "generate_dataset",
    "generate_window",
    "gl_derivative",
    "init_params",
    "load_dataset",
    "pgd_attack",
    "run_ablation",
    "run_curriculum",
    "save_dataset",
    "split",
    "sweep",
    "train_ablation",
]
