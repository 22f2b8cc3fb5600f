"""Fair inference on error-prone outcomes via a MIMIC measurement model."""

from .audit import (
    ConditionalParityCurve,
    ParityReport,
    PpvReport,
    conditional_parity_curve,
    counterfactual_check,
    predictive_parity,
    statistical_parity,
)
from .data import (
    Dataset,
    SimSpec,
    TransformRecord,
    load_csv,
    simulate,
    split,
    transform,
    write_csv,
)
from .dif import DifReport, DifRow, dif_scan, percent_effect
from .estimate import FitResult, LrTestResult, OptimOptions, fit, lr_test, observed_information
from .exceptions import (
    ConvergenceError,
    DataValidationError,
    FairMimicError,
    NotPositiveDefiniteError,
    SchemaVersionError,
    SingularInformationError,
)
from .model import (
    ImpliedMoments,
    MimicModel,
    implied_moments,
    load_model,
    log_likelihood,
    log_likelihood_grad,
    pack,
    param_names,
    save_model,
    template,
    unpack,
)
from .score import ScoreSet, decide, factor_score, fair_score, naive_score, score_dataset
from .select import LassoPath, cv_select, lasso_fit, penalty_max, spearman

__version__ = "0.1.0"

__all__ = [
    "ConditionalParityCurve",
    "ConvergenceError",
    "DataValidationError",
    "Dataset",
    "DifReport",
    "DifRow",
    "FairMimicError",
    "FitResult",
    "ImpliedMoments",
    "LassoPath",
    "LrTestResult",
    "MimicModel",
    "NotPositiveDefiniteError",
    "OptimOptions",
    "ParityReport",
    "PpvReport",
    "SchemaVersionError",
    "ScoreSet",
    "SimSpec",
    "SingularInformationError",
    "TransformRecord",
    "conditional_parity_curve",
    "counterfactual_check",
    "cv_select",
    "decide",
    "dif_scan",
    "factor_score",
    "fair_score",
    "fit",
    "implied_moments",
    "lasso_fit",
    "load_csv",
    "load_model",
    "log_likelihood",
    "log_likelihood_grad",
    "lr_test",
    "naive_score",
    "observed_information",
    "pack",
    "param_names",
    "penalty_max",
    "percent_effect",
    "predictive_parity",
    "save_model",
    "score_dataset",
    "simulate",
    "spearman",
    "split",
    "statistical_parity",
    "template",
    "transform",
    "unpack",
    "write_csv",
]
