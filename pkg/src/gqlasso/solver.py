"""Groupwise majorization descent for the smoothed multi-quantile objective.

The objective minimized at a fixed penalty level ``lam`` is::

    (1/(2n)) sum_k sum_i h^tau_k(y_i - x_i' beta_k) + lam * sum_{j>=1} pen_j(beta^j)

where ``beta^j`` is row ``j`` of the (p+1) x K coefficient sheet.  With
``grouped=True`` the penalty is ``w_j * ||beta^j||_2`` (one group per
predictor spanning all quantiles); with ``grouped=False`` it is the weighted
L1 norm ``sum_k w_jk |beta_jk|``.  Row 0 (intercepts) is never penalized.

Each group update minimizes the quadratic majorizer with curvature
``xi_j = ||X_j||^2 / (n gamma)`` in closed form, which guarantees the
objective never increases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .design import AugmentedView
from .errors import SolverDivergenceError, UsageError
from .loss import validate_gamma, validate_taus

__all__ = [
    "SolverConfig",
    "FitState",
    "default_gamma",
    "initial_state",
    "objective",
    "all_gradients",
    "kkt_violation",
    "update_intercept_group",
    "update_predictor_group",
    "solve_fixed_lambda",
]

WEIGHT_CAP = 1e8


def default_gamma(y, factor: float = 0.1, floor: float = 1e-6) -> float:
    """Smoothing width tied to the response scale: ``factor * IQR(y)``, floored."""
    q75, q25 = np.quantile(np.asarray(y, dtype=float), [0.75, 0.25])
    return max(factor * float(q75 - q25), floor)


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``gamma=None`` resolves to :func:`default_gamma` of the response with
    ``gamma_factor``.  The KKT tolerance at penalty ``lam`` is
    ``kkt_rel * lam + kkt_abs``.  ``fixed_curvature=True`` always steps
    with the global bound ``xi_j`` instead of the backtracked curvature.
    """

    gamma: float | None = None
    gamma_factor: float = 0.1
    tol: float = 1e-7
    max_cycles: int = 10000
    kkt_rel: float = 1e-4
    kkt_abs: float = 1e-8
    monotone_rtol: float = 1e-10
    fixed_curvature: bool = False

    def __post_init__(self):
        if self.gamma is not None:
            validate_gamma(self.gamma)
        if not self.tol > 0:
            raise UsageError("tol must be positive")
        if int(self.max_cycles) < 1:
            raise UsageError("max_cycles must be at least 1")
        if self.kkt_rel < 0 or self.kkt_abs <= 0:
            raise UsageError("KKT tolerances must be non-negative (absolute part positive)")
        if not self.gamma_factor > 0:
            raise UsageError("gamma_factor must be positive")

    def resolve_gamma(self, y) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        return default_gamma(y, self.gamma_factor)

    def kkt_tol(self, lam: float) -> float:
        return self.kkt_rel * lam + self.kkt_abs


@dataclass
class FitState:
    """Coefficients and bookkeeping for one solve.

    ``coefficients`` is on the working (standardized) scale of the view.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    objective: float
    lam: float
    gamma: float
    cycles_used: int = 0
    converged: bool = False
    kkt_max_violation: float = math.inf
    active_set: frozenset = frozenset()
    kkt_reentries: int = 0
    monotone_violations: int = 0
    residual_drift: float = 0.0

    def copy(self) -> "FitState":
        out = FitState(**self.__dict__)
        out.coefficients = self.coefficients.copy()
        out.residuals = self.residuals.copy()
        return out

    @property
    def support(self) -> frozenset:
        """Predictor indices (1-based) with any non-zero coefficient."""
        rows = np.flatnonzero(np.any(self.coefficients[1:] != 0.0, axis=1)) + 1
        return frozenset(int(j) for j in rows)


# --------------------------------------------------------------------------
# compiled kernels

_FM = {"reassoc", "contract", "arcp", "nsz"}
# backtracked curvature: first try, and floor, as fractions of the global bound
_START_SCALE = 0.25
_MIN_SCALE = 1e-3


@njit(cache=True, fastmath=_FM)
def _grad_block(xt, rt, taus, gamma, j, out):
    # rt is K x n; the clip form of the smoothed gradient vectorizes
    K, n = rt.shape
    inv = 0.5 / gamma
    xj = xt[j]
    for k in range(K):
        lo = taus[k] - 1.0
        hi = taus[k]
        c = taus[k] - 0.5
        rk = rt[k]
        acc = 0.0
        for i in range(n):
            acc += xj[i] * min(max(rk[i] * inv + c, lo), hi)
        out[k] = -acc / n


@njit(cache=True, fastmath=_FM)
def _loss_sum(rt, taus, gamma):
    K, n = rt.shape
    half = 0.5 / gamma
    total = 0.0
    for k in range(K):
        c = taus[k] - 0.5
        rk = rt[k]
        acc = 0.0
        for i in range(n):
            u = rk[i]
            a = abs(u)
            m = min(a, gamma)
            acc += 0.5 * (m * m * half + (a - m)) + c * u
        total += acc
    return total / n


@njit(cache=True)
def _penalty(beta, w, grouped):
    K = beta.shape[1]
    pen = 0.0
    for j in range(1, beta.shape[0]):
        if grouped:
            s = 0.0
            for k in range(K):
                s += beta[j, k] * beta[j, k]
            pen += w[j, 0] * math.sqrt(s)
        else:
            for k in range(K):
                pen += w[j, k] * abs(beta[j, k])
    return pen


@njit(cache=True)
def _objective(rt, beta, taus, gamma, lam, w, grouped):
    return _loss_sum(rt, taus, gamma) + lam * _penalty(beta, w, grouped)


@njit(cache=True, fastmath=_FM)
def _shift(rt, k, xj, d):
    rk = rt[k]
    for i in range(rk.shape[0]):
        rk[i] -= xj[i] * d


@njit(cache=True, fastmath=_FM)
def _loss_change(rt, k, xj, d, tau, gamma):
    # change in the quantile-k smoothed loss if row j moves by d (rt untouched)
    rk = rt[k]
    n = rk.shape[0]
    half = 0.5 / gamma
    c = tau - 0.5
    acc = 0.0
    for i in range(n):
        u0 = rk[i]
        u1 = u0 - xj[i] * d
        a0 = abs(u0)
        a1 = abs(u1)
        m0 = min(a0, gamma)
        m1 = min(a1, gamma)
        acc += 0.5 * ((m1 * m1 - m0 * m0) * half + (a1 - m1) - (a0 - m0)) + c * (u1 - u0)
    return acc / n


@njit(cache=True)
def _prox(beta, g, lam, w, xj, j, grouped, new):
    K = g.shape[0]
    if j == 0:
        for k in range(K):
            new[k] = beta[0, k] - g[k] / xj
    elif grouped:
        s = 0.0
        for k in range(K):
            u = -g[k] + xj * beta[j, k]
            new[k] = u
            s += u * u
        nrm = math.sqrt(s)
        thr = lam * w[j, 0]
        if nrm <= thr:
            for k in range(K):
                new[k] = 0.0
        else:
            fac = (1.0 - thr / nrm) / xj
            for k in range(K):
                new[k] = new[k] * fac
    else:
        for k in range(K):
            u = -g[k] + xj * beta[j, k]
            thr = lam * w[j, k]
            if u > thr:
                new[k] = (u - thr) / xj
            elif u < -thr:
                new[k] = (u + thr) / xj
            else:
                new[k] = 0.0


@njit(cache=True)
def _update_group(xt, rt, beta, taus, gamma, lam, w, xi, j, grouped, g, new, scale):
    """Majorizer minimization for row ``j``; returns max |change|.

    The curvature used is ``scale[j] * xi[j]``.  Below the global bound
    ``xi[j]`` a step is kept only if the exact loss change satisfies the
    majorization inequality; otherwise the scale doubles and the step is
    redone, so every accepted step decreases the objective.  A scale array
    of ones gives the plain fixed-curvature update.
    """
    K = rt.shape[0]
    _grad_block(xt, rt, taus, gamma, j, g)
    s = scale[j]
    while True:
        curv = xi[j] * s
        _prox(beta, g, lam, w, curv, j, grouped, new)
        if s >= 1.0:
            break
        lin = 0.0
        quad = 0.0
        dloss = 0.0
        for k in range(K):
            d = new[k] - beta[j, k]
            if d != 0.0:
                lin += g[k] * d
                quad += d * d
                dloss += _loss_change(rt, k, xt[j], d, taus[k], gamma)
        if dloss <= lin + 0.5 * curv * quad + 1e-15 * quad:
            scale[j] = max(0.7 * s, _MIN_SCALE)
            break
        s = min(2.0 * s, 1.0)
        scale[j] = s
    change = 0.0
    for k in range(K):
        d = new[k] - beta[j, k]
        if d != 0.0:
            beta[j, k] = new[k]
            _shift(rt, k, xt[j], d)
            if abs(d) > change:
                change = abs(d)
    return change


@njit(cache=True)
def _run_cycles(xt, rt, beta, taus, gamma, lam, w, xi, order, grouped, tol,
                max_cycles, mono_rtol, scale):
    K = rt.shape[0]
    g = np.empty(K)
    new = np.empty(K)
    obj_prev = _objective(rt, beta, taus, gamma, lam, w, grouped)
    cycles = 0
    violations = 0
    change = 0.0
    while cycles < max_cycles:
        change = _update_group(xt, rt, beta, taus, gamma, lam, w, xi, 0, grouped, g, new, scale)
        for t in range(order.shape[0]):
            c = _update_group(xt, rt, beta, taus, gamma, lam, w, xi, order[t], grouped, g, new,
                              scale)
            if c > change:
                change = c
        cycles += 1
        obj = _objective(rt, beta, taus, gamma, lam, w, grouped)
        if not math.isfinite(obj):
            return cycles, change, violations, obj
        if obj > obj_prev + mono_rtol * max(1.0, abs(obj_prev)):
            violations += 1
        obj_prev = obj
        if change < tol:
            break
    return cycles, change, violations, obj_prev


# --------------------------------------------------------------------------
# numpy-level helpers


def _weights(weights, p: int, K: int, grouped: bool) -> np.ndarray:
    if weights is None:
        return np.ones((p + 1, K))
    w = np.asarray(weights, dtype=float)
    if grouped and w.ndim == 1:
        w = np.repeat(w[:, None], K, axis=1)
    if w.shape != (p + 1, K):
        raise UsageError(f"penalty weights must have shape {(p + 1, K)}, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w[1:] <= 0):
        raise UsageError("penalty weights must be finite and positive")
    return np.ascontiguousarray(np.minimum(w, WEIGHT_CAP))


def _sgrad_array(r, taus, gamma):
    inner = 0.5 * (r / gamma + 2.0 * taus - 1.0)
    return np.where(r > gamma, taus, np.where(r < -gamma, taus - 1.0, inner))


def all_gradients(view: AugmentedView, residuals, taus, gamma) -> np.ndarray:
    """Gradient of the smoothed loss for every row at once, shape (p+1) x K."""
    s = _sgrad_array(np.asarray(residuals), np.asarray(taus)[None, :], gamma)
    return -(view.x.T @ s) / view.n


def objective(view: AugmentedView, beta, taus, gamma, lam, weights=None, grouped=True) -> float:
    """Full smoothed objective, penalty included, evaluated from scratch."""
    taus = validate_taus(taus)
    beta = np.asarray(beta, dtype=float)
    w = _weights(weights, view.p, taus.size, grouped)
    rt = np.ascontiguousarray(view.residuals(beta).T)
    return float(_objective(rt, beta, taus, float(gamma), float(lam), w, grouped))


def kkt_violation(beta, grads, lam, weights, grouped=True) -> np.ndarray:
    """Per-row violation of the optimality conditions.

    Row 0 reports ``||grad^0||``; an inactive row reports how far its gradient
    norm exceeds the threshold; an active row reports the norm of the
    gradient plus penalty subgradient.
    """
    p1, K = beta.shape
    w = weights
    out = np.empty(p1)
    out[0] = np.linalg.norm(grads[0])
    for j in range(1, p1):
        b, g = beta[j], grads[j]
        if grouped:
            nb = np.linalg.norm(b)
            if nb == 0.0:
                out[j] = max(np.linalg.norm(g) - lam * w[j, 0], 0.0)
            else:
                out[j] = np.linalg.norm(g + lam * w[j, 0] * b / nb)
        else:
            v = np.where(b != 0.0, np.abs(g + lam * w[j] * np.sign(b)),
                         np.maximum(np.abs(g) - lam * w[j], 0.0))
            out[j] = np.linalg.norm(v)
    return out


def initial_state(view: AugmentedView, taus, gamma, lam=0.0, beta=None,
                  weights=None, grouped=True) -> FitState:
    """State at ``beta`` (zeros by default) with consistent residuals."""
    taus = validate_taus(taus)
    K = taus.size
    if beta is None:
        beta = np.zeros((view.p + 1, K))
    beta = np.array(beta, dtype=float)
    if beta.shape != (view.p + 1, K):
        raise UsageError(f"coefficient sheet must be {(view.p + 1, K)}, got {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise UsageError("warm start contains non-finite values")
    r = np.ascontiguousarray(view.residuals(beta))
    obj = objective(view, beta, taus, gamma, lam, weights, grouped)
    return FitState(beta, r, obj, float(lam), float(gamma))


def _xi(view: AugmentedView, gamma: float) -> np.ndarray:
    return view.sq_norms / (view.n * gamma)


def update_intercept_group(state: FitState, view: AugmentedView, taus, config=None) -> FitState:
    """One majorized gradient step on the intercept row (step ``1 / xi_0``).

    Returns a new state; the input is not modified.
    """
    taus = validate_taus(taus)
    out = state.copy()
    K = taus.size
    w = np.ones((view.p + 1, K))
    xt = np.ascontiguousarray(view.x.T)
    rt = np.ascontiguousarray(out.residuals.T)
    _update_group(xt, rt, out.coefficients, taus, out.gamma, out.lam, w,
                  _xi(view, out.gamma), 0, True, np.empty(K), np.empty(K), np.ones(view.p + 1))
    out.residuals = np.ascontiguousarray(rt.T)
    out.objective = objective(view, out.coefficients, taus, out.gamma, out.lam)
    return out


def update_predictor_group(state: FitState, view: AugmentedView, taus, lam, j,
                           config=None, weights=None, grouped=True) -> FitState:
    """Closed-form group update of predictor row ``j >= 1`` at penalty ``lam``.

    With ``u = -grad^j + xi_j beta^j`` the new row is zero if
    ``||u|| <= lam * w_j`` and ``(u / xi_j) (1 - lam w_j / ||u||)`` otherwise.
    """
    taus = validate_taus(taus)
    if not (1 <= int(j) <= view.p):
        raise UsageError(f"predictor index {j} out of range 1..{view.p}")
    K = taus.size
    w = _weights(weights, view.p, K, grouped)
    out = state.copy()
    out.lam = float(lam)
    xt = np.ascontiguousarray(view.x.T)
    rt = np.ascontiguousarray(out.residuals.T)
    _update_group(xt, rt, out.coefficients, taus, out.gamma, float(lam), w,
                  _xi(view, out.gamma), int(j), grouped, np.empty(K), np.empty(K),
                  np.ones(view.p + 1))
    out.residuals = np.ascontiguousarray(rt.T)
    out.objective = objective(view, out.coefficients, taus, out.gamma, lam, weights, grouped)
    return out


def solve_fixed_lambda(view: AugmentedView, taus, lam, warm_start=None, active_set=None,
                       config: SolverConfig | None = None, weights=None, grouped=True,
                       gamma=None, freeze_inactive=False) -> FitState:
    """Minimize the smoothed objective at a single penalty level.

    Without ``warm_start`` the intercept row starts at the empirical
    quantiles of the response and every predictor row at zero.

    Cycles over the intercept and ``active_set`` (all predictors when None,
    plus any row that is non-zero in ``warm_start``) until the largest
    coefficient change in a cycle drops below ``config.tol``.  A KKT sweep over
    every predictor then re-admits violators and the cycling resumes; if the
    active rows themselves miss the KKT tolerance the change threshold is
    tightened.  ``converged`` is true only when the sweep comes back clean.

    ``freeze_inactive=True`` holds rows outside the active set at zero and
    restricts the KKT sweep to the rows being optimized.
    """
    config = config or SolverConfig()
    taus = validate_taus(taus)
    K = taus.size
    lam = float(lam)
    if not lam >= 0 or not math.isfinite(lam):
        raise UsageError(f"penalty level must be finite and non-negative, got {lam}")
    gamma = validate_gamma(gamma if gamma is not None else config.resolve_gamma(view.y))
    w = _weights(weights, view.p, K, grouped)
    xi = _xi(view, gamma)
    xt = np.ascontiguousarray(view.x.T)

    if warm_start is None:
        # cold start at the intercept-only fit, so a tiny gamma needs no long walk
        warm_start = np.zeros((view.p + 1, K))
        warm_start[0] = np.quantile(view.y, taus)
    state = initial_state(view, taus, gamma, lam, warm_start, w, grouped)
    beta = state.coefficients
    rt = np.ascontiguousarray(state.residuals.T)
    if active_set is None:
        active = set(range(1, view.p + 1))
    else:
        active = {int(j) for j in active_set}
        if any(j < 1 or j > view.p for j in active):
            raise UsageError(f"active set must lie within 1..{view.p}")
    active |= {int(j) for j in np.flatnonzero(np.any(beta[1:] != 0.0, axis=1)) + 1}

    tol = config.tol
    kkt_tol = config.kkt_tol(lam)
    scale = np.full(view.p + 1, 1.0 if config.fixed_curvature else _START_SCALE)
    cycles = 0
    violations = 0
    reentries = 0
    converged = False
    kkt_max = math.inf
    while True:
        order = np.array(sorted(active), dtype=np.int64)
        c, _, v, obj = _run_cycles(xt, rt, beta, taus, gamma, lam, w, xi, order, grouped,
                                   tol, config.max_cycles - cycles, config.monotone_rtol, scale)
        cycles += c
        violations += v
        if not math.isfinite(obj):
            raise SolverDivergenceError(f"objective became non-finite at lambda={lam:g}")
        grads = all_gradients(view, rt.T, taus, gamma)
        viol = kkt_violation(beta, grads, lam, w, grouped)
        if freeze_inactive:
            viol[[j for j in range(1, view.p + 1) if j not in active]] = 0.0
        kkt_max = float(viol.max())
        entering = [j for j in range(1, view.p + 1) if j not in active and viol[j] > kkt_tol]
        if cycles >= config.max_cycles:
            break
        if entering:
            active.update(entering)
            reentries += len(entering)
            continue
        if kkt_max <= kkt_tol:
            converged = True
            break
        if tol < 1e-15:
            break
        tol *= 0.1

    exact = view.residuals(beta)
    drift = float(np.max(np.abs(exact - rt.T)) / max(1.0, float(np.max(np.abs(exact)))))
    state.residuals = np.ascontiguousarray(exact)
    state.objective = objective(view, beta, taus, gamma, lam, w, grouped)
    state.cycles_used = cycles
    state.converged = converged
    state.kkt_max_violation = kkt_max
    state.active_set = frozenset(active)
    state.kkt_reentries = reentries
    state.monotone_violations = violations
    state.residual_drift = drift
    return state
