"""Skew elliptical distributions with independent skewing functions (SELIS)."""

from .baselines import AmstModel, GseUnivariateModel, amst_log_pdf, fit_amst, fit_univariate, gse_log_pdf
from .elliptical import EllipticalParams, SphericalFamily
from .errors import (
    BudgetExceededError,
    DegenerateDataError,
    FitAbortedError,
    NumericalDegeneracyError,
    SelisError,
    UnsupportedOperationError,
)
from .estimate import FitConfig, FitResult, initialize, qmle_fit, sgd_fit
from .model import (
    McDraws,
    SelisModel,
    estimate_normalizer,
    log_likelihood,
    log_pdf,
    quasi_log_likelihood,
    sample,
)
from .skewing import SigmoidKind, SkewingMatrix

__version__ = "0.1.0"

__all__ = [
    "AmstModel",
    "BudgetExceededError",
    "DegenerateDataError",
    "EllipticalParams",
    "FitAbortedError",
    "FitConfig",
    "FitResult",
    "GseUnivariateModel",
    "McDraws",
    "NumericalDegeneracyError",
    "SelisError",
    "SelisModel",
    "SigmoidKind",
    "SkewingMatrix",
    "SphericalFamily",
    "UnsupportedOperationError",
    "amst_log_pdf",
    "estimate_normalizer",
    "fit_amst",
    "fit_univariate",
    "gse_log_pdf",
    "initialize",
    "log_likelihood",
    "log_pdf",
    "qmle_fit",
    "quasi_log_likelihood",
    "sample",
    "sgd_fit",
]
