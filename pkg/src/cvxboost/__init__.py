"""Gradient boosting as convex optimization in function space, with per-step certificates."""

from .dataset import Dataset, Measure, Schema, expect, inner_muX, load_csv, norm_muX
from .diagnostics import exact_partition_minimizer, step_summary, sum_square_steps, verify_trace
from .engine import AdditiveModel, BoostTrace, RunConfig, classify, predict, run_algorithm1, run_algorithm2
from .estimators import BoostingClassifier, BoostingRegressor
from .exceptions import (
    AssumptionError,
    BoostError,
    CapacityError,
    CertificateError,
    ConfigError,
    DimensionError,
    EmptyDataset,
    NumericalError,
    ParseError,
    SchemaError,
    UnboundedError,
    UnsupportedGenerator,
)
from .lab import ConsistencyConfig, GapCurve, bayes_reference, check_schedule, make_generator, run_consistency
from .learners import GridPartition, Tree, WeakClassConfig, enumerate_grid_class, fit_ls_tree, parse_class, select_direction_F
from .losses import CATALOG, LossSpec, check_assumptions, parse_loss, risk

__version__ = "0.1.0"
