"""Multi-view attributed graph clustering (DIAGC) with a small autodiff core."""

from .estimator import DIAGC, NumericalError, TrainHistory, ablate, predict, train
from .graphdata import (
    MultiViewGraph,
    SparseAdjacency,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    normalize,
    save_dataset,
)
from .metrics import MetricsReport, accuracy, ari, evaluate, f1_score, nmi

__version__ = "0.1.0"

__all__ = [
    "DIAGC",
    "MetricsReport",
    "MultiViewGraph",
    "NumericalError",
    "SparseAdjacency",
    "SyntheticSpec",
    "TrainHistory",
    "ablate",
    "accuracy",
    "ari",
    "evaluate",
    "f1_score",
    "generate_synthetic",
    "load_dataset",
    "nmi",
    "normalize",
    "predict",
    "save_dataset",
    "train",
]
