"""Regression-based principal components for sparse growth curves and
bivariate quantile-contour screening charts built on their scores."""

__version__ = "0.1.0"

from .basis import BasisSystem, basis_from_knots, build_basis, evaluate, orthogonalize
from .contour import (
    DEFAULT_TAU_GRID,
    ContourChart,
    ScreeningResult,
    build_chart,
    rank_point,
    screen_dataset,
    screen_subject,
    write_contours_csv,
)
from .covariate import BootstrapTestResult, CovariateModel, MuSpec, bootstrap_test, expected_path, fit_covariate
from .dataset import MeanModel, SparseDataset, Subject, center, fit_mean, read_csv, write_csv
from .errors import (
    ConvergenceError,
    DataError,
    DegeneracyError,
    DomainError,
    GrowthPathsError,
    InsufficientDataError,
)
from .rpca import (
    ComponentModel,
    FitConfig,
    fit,
    fit_component,
    project_dataset,
    project_scores,
    r_squared,
    select_basis,
)
from .serialization import load_model, save_model

__all__ = [
    "__version__",
    "BasisSystem", "basis_from_knots", "build_basis", "evaluate", "orthogonalize",
    "DEFAULT_TAU_GRID", "ContourChart", "ScreeningResult", "build_chart", "rank_point", "screen_dataset",
    "screen_subject", "write_contours_csv",
    "BootstrapTestResult", "CovariateModel", "MuSpec", "bootstrap_test", "expected_path", "fit_covariate",
    "MeanModel", "SparseDataset", "Subject", "center", "fit_mean", "read_csv", "write_csv",
    "ConvergenceError", "DataError", "DegeneracyError", "DomainError", "GrowthPathsError",
    "InsufficientDataError",
    "ComponentModel", "FitConfig", "fit", "fit_component", "project_dataset", "project_scores", "r_squared",
    "select_basis",
    "load_model", "save_model",
]
