"""Estimator front end: gQ-Lasso, per-quantile rq-Lasso, and GCQR.

All three run on the same majorization-descent solver:

* ``GQ_LASSO`` -- one group per predictor across all K quantiles, so a
  predictor is either in the model at every quantile or at none.
* ``RQ_LASSO`` -- K independent single-quantile lasso fits, each with its
  own cross-validated penalty.
* ``GCQR`` -- a joint fit with a weighted L1 penalty whose weight for
  predictor ``j`` is ``1 / max_k |b_jk|`` from an initial rq-Lasso fit.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import AugmentedView, DesignData, Standardizer
from .errors import UsageError
from .loss import validate_taus
from .path import CvResult, cross_validate
from .solver import WEIGHT_CAP, SolverConfig, solve_fixed_lambda

__all__ = [
    "Method",
    "MethodSpec",
    "CvSettings",
    "ModelFit",
    "fit_gq_lasso",
    "fit_rq_lasso",
    "fit_gcqr",
    "fit_method",
    "gcqr_weights",
    "predict_quantiles",
    "write_coefficients_csv",
]


class Method(str, enum.Enum):
    GQ_LASSO = "gq-lasso"
    RQ_LASSO = "rq-lasso"
    GCQR = "gcqr"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise UsageError(f"unknown method {value!r}; choose from {[m.value for m in cls]}")


@dataclass(frozen=True)
class MethodSpec:
    kind: Method
    taus: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Method.parse(self.kind))
        object.__setattr__(self, "taus", tuple(validate_taus(self.taus).tolist()))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise UsageError("GCQR weights must be finite and positive")


@dataclass(frozen=True)
class CvSettings:
    """Cross-validation and path settings shared by the estimators.

    ``lam`` bypasses cross-validation and solves at that single penalty.
    """

    folds: int = 5
    n_lambda: int = 100
    ratio: float | None = None
    seed: int = 0
    one_se: bool = False
    lam: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.lam is None and self.folds < 2:
            raise UsageError("folds must be at least 2")
        if self.n_lambda < 2:
            raise UsageError("n_lambda must be at least 2")
        if self.lam is not None and not self.lam >= 0:
            raise UsageError("lambda must be non-negative")


@dataclass
class ModelFit:
    """A fitted multi-quantile model.

    ``coefficients`` is the (p+1) x K sheet in original predictor units;
    ``std_coefficients`` the same on the standardized working scale.
    ``lam`` is a float, or one value per quantile for RQ_LASSO.
    """

    method: MethodSpec
    coefficients: np.ndarray
    std_coefficients: np.ndarray
    lam: float | np.ndarray
    scaler: Standardizer
    column_names: tuple
    converged: bool
    kkt_max_violation: float
    provenance: dict = field(default_factory=dict)
    cv: object = field(default=None, repr=False)

    @property
    def taus(self) -> np.ndarray:
        return np.array(self.method.taus)

    @property
    def selected_support(self) -> list:
        """Predictor indices (1-based) with a non-zero coefficient, one set per quantile."""
        nz = self.std_coefficients[1:] != 0.0
        return [frozenset(int(j) + 1 for j in np.flatnonzero(nz[:, k]))
                for k in range(nz.shape[1])]

    @property
    def union_support(self) -> frozenset:
        return frozenset().union(*self.selected_support)


def _provenance(cv: CvSettings, **extra) -> dict:
    out = {
        "seed": cv.seed,
        "folds": cv.folds,
        "n_lambda": cv.n_lambda,
        "ratio": cv.ratio,
        "one_se": cv.one_se,
        "fixed_lambda": cv.lam,
        "solver": dict(cv.solver.__dict__),
    }
    out.update(extra)
    return out


def _fit_penalized(data: DesignData, taus, cv: CvSettings, weights=None, grouped=True):
    """Return (standardized sheet, lambda, fit state, CvResult or None, scaler)."""
    taus = validate_taus(taus)
    view = AugmentedView(data, taus.size)
    if cv.lam is not None:
        state = solve_fixed_lambda(view, taus, cv.lam, config=cv.solver,
                                   weights=weights, grouped=grouped)
        return state.coefficients, float(cv.lam), state, None, view.scaler
    res = cross_validate(data, taus, folds=cv.folds, m=cv.n_lambda, ratio=cv.ratio,
                         config=cv.solver, seed=cv.seed, weights=weights,
                         grouped=grouped, one_se=cv.one_se)
    return res.fit.coefficients, res.lambda_min, res.fit, res, view.scaler


def fit_gq_lasso(data: DesignData, taus, cv: CvSettings | None = None) -> ModelFit:
    """Group-lasso multi-quantile fit with a cross-validated penalty."""
    cv = cv or CvSettings()
    spec = MethodSpec(Method.GQ_LASSO, taus)
    beta, lam, state, res, scaler = _fit_penalized(data, spec.taus, cv)
    return ModelFit(spec, scaler.to_original(beta), beta, lam, scaler, data.column_names,
                    state.converged, state.kkt_max_violation, _provenance(cv), res)


def fit_rq_lasso(data: DesignData, taus, cv: CvSettings | None = None) -> ModelFit:
    """Independent lasso quantile regressions, one cross-validated penalty per quantile."""
    cv = cv or CvSettings()
    spec = MethodSpec(Method.RQ_LASSO, taus)
    sheets, lams, results = [], [], []
    converged, kkt = True, 0.0
    scaler = None
    for tau in spec.taus:
        beta, lam, state, res, scaler = _fit_penalized(data, [tau], cv)
        sheets.append(beta[:, 0])
        lams.append(lam)
        results.append(res)
        converged &= state.converged
        kkt = max(kkt, state.kkt_max_violation)
    beta = np.column_stack(sheets)
    return ModelFit(spec, scaler.to_original(beta), beta, np.array(lams), scaler,
                    data.column_names, converged, kkt, _provenance(cv), results)


def gcqr_weights(initial: np.ndarray) -> np.ndarray:
    """Penalty weights ``1 / max_k |b_jk|`` broadcast over quantiles, capped for zero rows.

    ``initial`` is a (p+1) x K sheet; row 0 (intercepts) gets weight 1 and is
    unpenalized anyway.
    """
    b = np.asarray(initial, dtype=float)
    peak = np.max(np.abs(b), axis=1)
    with np.errstate(divide="ignore"):
        w = np.where(peak > 0, 1.0 / peak, WEIGHT_CAP)
    w = np.minimum(w, WEIGHT_CAP)
    w[0] = 1.0
    return np.repeat(w[:, None], b.shape[1], axis=1)


def fit_gcqr(data: DesignData, taus, cv: CvSettings | None = None,
             initial: ModelFit | None = None) -> ModelFit:
    """Weighted-L1 joint fit with weights from an initial rq-Lasso pass.

    Every (j, k) coefficient is its own penalty group with weight ``w_j``;
    a predictor that the initial fit zeroed at every quantile gets the cap
    weight and stays out.  One penalty is cross-validated for all quantiles.
    """
    cv = cv or CvSettings()
    taus = validate_taus(taus)
    if initial is None:
        init_cv = CvSettings(cv.folds, cv.n_lambda, cv.ratio, cv.seed, cv.one_se, None, cv.solver)
        initial = fit_rq_lasso(data, taus, init_cv)
    w = gcqr_weights(initial.std_coefficients)
    spec = MethodSpec(Method.GCQR, taus, w)
    beta, lam, state, res, scaler = _fit_penalized(data, spec.taus, cv, weights=w, grouped=False)
    return ModelFit(spec, scaler.to_original(beta), beta, lam, scaler, data.column_names,
                    state.converged, state.kkt_max_violation,
                    _provenance(cv, initial_lambda=np.asarray(initial.lam).tolist()), res)


def fit_method(kind, data: DesignData, taus, cv: CvSettings | None = None) -> ModelFit:
    kind = Method.parse(kind)
    if kind is Method.GQ_LASSO:
        return fit_gq_lasso(data, taus, cv)
    if kind is Method.RQ_LASSO:
        return fit_rq_lasso(data, taus, cv)
    return fit_gcqr(data, taus, cv)


def predict_quantiles(fit: ModelFit, xnew) -> np.ndarray:
    """Predicted quantiles, one column per tau; crossings are left as they are."""
    x = np.asarray(xnew, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    p1 = fit.coefficients.shape[0]
    if x.ndim != 2 or x.shape[1] != p1:
        raise UsageError(f"new design must have {p1} columns (intercept first), got shape {x.shape}")
    if not np.all(x[:, 0] == 1.0):
        raise UsageError("column 0 of the new design must be all ones")
    return x @ fit.coefficients


def write_coefficients_csv(fit: ModelFit, path) -> Path:
    """Write the original-scale sheet: header ``predictor,tau_0.1,...``, intercept first."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predictor"] + [f"tau_{t:g}" for t in fit.method.taus])
        for name, row in zip(fit.column_names, fit.coefficients):
            w.writerow([name] + [f"{v:.12g}" for v in row])
    return path
