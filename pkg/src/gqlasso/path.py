"""Penalty paths with warm starts and strong-rule screening, and k-fold CV."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .design import AugmentedView, DesignData
from .errors import ConstantColumnError, SolverDivergenceError, UsageError
from .loss import check_loss, validate_taus
from .solver import (
    FitState,
    SolverConfig,
    _weights,
    all_gradients,
    solve_fixed_lambda,
)

__all__ = [
    "LambdaPath",
    "CvResult",
    "default_ratio",
    "intercept_only_fit",
    "lambda_max",
    "penalty_scores",
    "build_path",
    "fold_assignments",
    "cross_validate",
]

log = logging.getLogger(__name__)

# smallest usable path anchor; reached only when every predictor gradient vanishes
_TINY_LAMBDA = 1e-12


def default_ratio(n: int, p: int, K: int) -> float:
    return 1e-2 if n > K * p else 1e-1


@dataclass
class LambdaPath:
    """Solutions along a strictly decreasing penalty grid."""

    lambdas: np.ndarray
    fits: list
    screened: np.ndarray
    reentries: np.ndarray
    lambda_max: float

    def coefficients(self) -> np.ndarray:
        """Stack of coefficient sheets, shape (m, p+1, K)."""
        return np.stack([f.coefficients for f in self.fits])

    @property
    def all_converged(self) -> bool:
        return all(f.converged for f in self.fits)


@dataclass
class CvResult:
    lambda_grid: np.ndarray
    mean_cv_loss: np.ndarray
    se_cv_loss: np.ndarray
    lambda_min: float
    index_min: int
    fold_assignments: np.ndarray
    fold_losses: np.ndarray = field(repr=False)
    fit: FitState | None = field(default=None, repr=False)
    path: LambdaPath | None = field(default=None, repr=False)


def penalty_scores(grads: np.ndarray, weights: np.ndarray, grouped: bool) -> np.ndarray:
    """Per-predictor statistic compared against lambda (row 0 is set to 0).

    Grouped: ``||grad^j|| / w_j``.  Separable: ``max_k |grad_jk| / w_jk``.
    """
    if grouped:
        s = np.linalg.norm(grads, axis=1) / weights[:, 0]
    else:
        s = np.max(np.abs(grads) / weights, axis=1)
    s[0] = 0.0
    return s


def intercept_only_fit(view: AugmentedView, taus, config: SolverConfig | None = None,
                       weights=None, grouped=True, gamma=None) -> FitState:
    """Smoothed fit with every predictor row held at zero."""
    config = config or SolverConfig()
    taus = validate_taus(taus)
    return solve_fixed_lambda(view, taus, 0.0, active_set=(), config=config,
                              weights=weights, grouped=grouped, gamma=gamma,
                              freeze_inactive=True)


def lambda_max(view: AugmentedView, taus, config: SolverConfig | None = None,
               weights=None, grouped=True, gamma=None) -> float:
    """Smallest penalty at which every predictor row is zero."""
    config = config or SolverConfig()
    taus = validate_taus(taus)
    fit = intercept_only_fit(view, taus, config, weights, grouped, gamma)
    w = _weights(weights, view.p, taus.size, grouped)
    grads = all_gradients(view, fit.residuals, taus, fit.gamma)
    return float(penalty_scores(grads, w, grouped).max())


def _geometric_grid(top: float, m: int, ratio: float) -> np.ndarray:
    return top * np.power(ratio, np.arange(m) / (m - 1))


def build_path(view: AugmentedView, taus, m: int = 100, ratio: float | None = None,
               config: SolverConfig | None = None, lambdas=None, screen: bool = True,
               weights=None, grouped: bool = True, gamma=None) -> LambdaPath:
    """Warm-started solutions along a geometric grid from lambda_max down.

    With ``screen=True`` the sequential strong rule admits predictor ``j`` at
    step ``t`` when its score at the previous solution is at least
    ``2 lam_t - lam_{t-1}``; the solver's KKT sweep re-admits anything the
    rule wrongly discards.  ``lambdas`` overrides the grid (it must be
    strictly decreasing and positive).
    """
    config = config or SolverConfig()
    taus = validate_taus(taus)
    K = taus.size
    gamma = config.resolve_gamma(view.y) if gamma is None else float(gamma)
    w = _weights(weights, view.p, K, grouped)
    start = intercept_only_fit(view, taus, config, w, grouped, gamma)
    grads = all_gradients(view, start.residuals, taus, gamma)
    scores = penalty_scores(grads, w, grouped)
    lmax = float(scores.max())
    if lambdas is None:
        if m < 2:
            raise UsageError("path length must be at least 2")
        ratio = default_ratio(view.n, view.p, K) if ratio is None else float(ratio)
        if not 0 < ratio < 1:
            raise UsageError("ratio must lie in (0, 1)")
        lambdas = _geometric_grid(max(lmax, _TINY_LAMBDA), m, ratio)
    else:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.ndim != 1 or lambdas.size < 1 or np.any(lambdas <= 0) or np.any(np.diff(lambdas) >= 0):
            raise UsageError("lambda grid must be positive and strictly decreasing")

    fits = []
    screened = np.zeros(lambdas.size, dtype=int)
    reentries = np.zeros(lambdas.size, dtype=int)
    prev_beta = start.coefficients
    prev_lam = max(lmax, lambdas[0])
    all_predictors = range(1, view.p + 1)
    for t, lam in enumerate(lambdas):
        if screen:
            cut = 2.0 * lam - prev_lam
            active = [j for j in all_predictors if scores[j] >= cut]
        else:
            active = list(all_predictors)
        try:
            fit = solve_fixed_lambda(view, taus, lam, warm_start=prev_beta, active_set=active,
                                     config=config, weights=w, grouped=grouped, gamma=gamma)
        except SolverDivergenceError as exc:
            raise SolverDivergenceError(f"{exc} (path index {t})", lambda_index=t) from exc
        if not fit.converged:
            log.debug("solve at lambda=%g (index %d) did not converge", lam, t)
        fits.append(fit)
        screened[t] = len(active)
        reentries[t] = fit.kkt_reentries
        prev_beta, prev_lam = fit.coefficients, lam
        if screen:
            scores = penalty_scores(all_gradients(view, fit.residuals, taus, gamma), w, grouped)
    return LambdaPath(lambdas, fits, screened, reentries, lmax)


def fold_assignments(n: int, folds: int, seed) -> np.ndarray:
    """Fold id per observation: seeded permutation cut into contiguous blocks."""
    if folds < 2:
        raise UsageError("need at least 2 folds")
    if n < folds:
        raise UsageError(f"cannot make {folds} folds from {n} observations")
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=int)
    for f, block in enumerate(np.array_split(perm, folds)):
        ids[block] = f
    return ids


def cross_validate(data: DesignData, taus, folds: int = 5, m: int = 100,
                   ratio: float | None = None, config: SolverConfig | None = None,
                   seed=0, weights=None, grouped: bool = True, one_se: bool = False,
                   screen: bool = True, lambdas=None) -> CvResult:
    """K-fold cross-validation of the penalty level on the exact check loss.

    The grid is anchored at the full-data lambda_max; each training split is
    standardized on its own.  The validation loss of a fold is
    ``sum_k sum_{i in fold} rho_tau_k(y_i - x_i' beta_k)``.  Ties at the
    minimum go to the larger penalty.  The returned ``fit`` is the full-data
    solution at the selected penalty.
    """
    config = config or SolverConfig()
    taus = validate_taus(taus)
    K = taus.size
    gamma = config.resolve_gamma(data.y)
    view = AugmentedView(data, K)
    full = build_path(view, taus, m=m, ratio=ratio, config=config, lambdas=lambdas,
                      screen=screen, weights=weights, grouped=grouped, gamma=gamma)
    grid = full.lambdas
    ids = fold_assignments(data.n, folds, seed)
    losses = np.zeros((folds, grid.size))
    for f in range(folds):
        train = np.flatnonzero(ids != f)
        test = np.flatnonzero(ids == f)
        try:
            sub = data.subset(train, context=f"training split of fold {f}")
        except ConstantColumnError:
            raise
        fview = AugmentedView(sub, K)
        path = build_path(fview, taus, config=config, lambdas=grid, screen=screen,
                          weights=weights, grouped=grouped, gamma=gamma)
        xt = data.x[test]
        for t, fit in enumerate(path.fits):
            beta = fview.scaler.to_original(fit.coefficients)
            r = data.y[test, None] - xt @ beta
            losses[f, t] = float(np.sum(check_loss(r, taus[None, :])))
    mean = losses.mean(axis=0)
    se = losses.std(axis=0, ddof=1) / math.sqrt(folds)
    best = float(mean.min())
    # first index attaining the minimum is the largest lambda (grid decreasing)
    idx = int(np.flatnonzero(mean <= best)[0])
    if one_se:
        idx = int(np.flatnonzero(mean <= best + se[idx])[0])
    return CvResult(grid, mean, se, float(grid[idx]), idx, ids, losses,
                    fit=full.fits[idx], path=full)
