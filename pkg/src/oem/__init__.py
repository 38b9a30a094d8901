"""Penalized linear and logistic regression by orthogonalizing EM (OEM).

The solver works from the sufficient statistics ``X'X/n`` and ``X'y/n``,
so many penalties, lambda values and cross-validation folds can share one
pass over the data.
"""

from .cv import CvResult, cv_generic, make_folds, select, xval_fast
from .errors import OEMError
from .glm import LogisticConfig, fit_logistic_path, working_response
from .gram import (
    ColumnScaling,
    DenseDesign,
    GramState,
    MmapDesign,
    SparseDesign,
    as_design,
    compute_fold_grams,
    compute_gram,
    largest_eigenvalue,
    standardize,
)
from .io import ModelArtifact, import_csv, load_model, open_mmapped, predict, save_model, write_binary
from .prox import PenaltySpec, make_specs
from .solver import FitResult, PathConfig, fit, fit_from_gram, fit_path, lambda_path, oem_step, penalized_loss

__version__ = "0.1.0"

__all__ = [
    "ColumnScaling", "CvResult", "DenseDesign", "FitResult", "GramState", "LogisticConfig",
    "MmapDesign", "ModelArtifact", "OEMError", "PathConfig", "PenaltySpec", "SparseDesign",
    "as_design", "compute_fold_grams", "compute_gram", "cv_generic", "fit", "fit_from_gram",
    "fit_logistic_path", "fit_path", "import_csv", "lambda_path", "largest_eigenvalue",
    "load_model", "make_folds", "make_specs", "oem_step", "open_mmapped", "penalized_loss",
    "predict", "save_model", "select", "standardize", "working_response", "write_binary",
]
