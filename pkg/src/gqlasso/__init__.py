"""Group-penalized multi-quantile regression (gQ-Lasso) with rq-Lasso and GCQR baselines."""
from .errors import (ConstantColumnError, DataError, DomainError, GQLassoError,
                     InsufficientHistoryError, NumericalError, SolverDivergenceError, UsageError)
from .loss import check_loss, huber_loss, smoothed_check_grad, smoothed_check_loss
from .design import AugmentedView, DesignData, Standardizer
from .solver import FitState, SolverConfig, solve_fixed_lambda
from .path import CvResult, LambdaPath, build_path, cross_validate
from .estimators import (CvSettings, Method, MethodSpec, ModelFit, fit_gcqr, fit_gq_lasso,
                         fit_method, fit_rq_lasso, predict_quantiles)
from .simulate import ErrorKind, OracleTruth, SimScenario, generate, oracle_coefficients
from .metrics import EvalReport

__version__ = "0.1.0"

__all__ = [
    "ConstantColumnError", "DataError", "DomainError", "GQLassoError", "InsufficientHistoryError",
    "NumericalError", "SolverDivergenceError", "UsageError",
    "check_loss", "huber_loss", "smoothed_check_grad", "smoothed_check_loss",
    "AugmentedView", "DesignData", "Standardizer",
    "FitState", "SolverConfig", "solve_fixed_lambda",
    "CvResult", "LambdaPath", "build_path", "cross_validate",
    "CvSettings", "Method", "MethodSpec", "ModelFit", "fit_gcqr", "fit_gq_lasso", "fit_method",
    "fit_rq_lasso", "predict_quantiles",
    "ErrorKind", "OracleTruth", "SimScenario", "generate", "oracle_coefficients",
    "EvalReport",
]
