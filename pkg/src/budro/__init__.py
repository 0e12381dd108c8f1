"""Individually fair gradient boosting with a transport-budget adversary."""
__version__ = "0.1.0"

from .dataio import DataSchema, Dataset, load_csv, split, augment_support, generate_synthetic
from .errors import BudroError, ConfigError, DataError, SolverError
from .fairmetric import ProjectionMetric, build_projection, build_cost_matrix, fair_distance
from .gbdt import BoostConfig, Ensemble
from .otsolver import LossColumns, SolverConfig, solve
from .training import BuDROConfig, train_budro, train_baseline
from .evaluation import audit, certify_drf, balanced_accuracy, group_gaps, consistency

__all__ = [
    "DataSchema", "Dataset", "load_csv", "split", "augment_support", "generate_synthetic",
    "BudroError", "ConfigError", "DataError", "SolverError",
    "ProjectionMetric", "build_projection", "build_cost_matrix", "fair_distance",
    "BoostConfig", "Ensemble", "LossColumns", "SolverConfig", "solve",
    "BuDROConfig", "train_budro", "train_baseline",
    "audit", "certify_drf", "balanced_accuracy", "group_gaps", "consistency",
]
