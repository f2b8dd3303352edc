"""Design data and Kronecker-structured linear algebra for the stacked problem.

The K-quantile problem is a single regression on the stacked response
``(y, ..., y)`` against ``I_K (x) X``.  That matrix is never built: because
of the block structure, the gradient block of predictor ``j`` only needs
column ``j`` of ``X`` against each quantile's own residual column, and the
curvature block of group ``j`` is ``||X_j||^2 / (n gamma)`` times ``I_K``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConstantColumnError, DataError, UsageError
from .loss import smoothed_check_grad, validate_gamma, validate_taus

__all__ = [
    "DesignData",
    "Standardizer",
    "AugmentedView",
    "column_group_gradient",
    "group_majorizer_eigenvalue",
]


@dataclass(frozen=True, eq=False)
class DesignData:
    """Response vector plus an n x (p+1) design whose first column is all ones.

    ``stamps`` is optional and only used by time-indexed data (monthly YYYYMM
    integers, one per row).
    """

    y: np.ndarray
    x: np.ndarray
    column_names: tuple = ()
    stamps: np.ndarray | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise DataError("design matrix must be 2-d")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"response has {y.shape[0]} rows but design has {x.shape[0]}")
        if y.shape[0] < 2:
            raise DataError("need at least two observations")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("design data contains non-finite values")
        if not np.all(x[:, 0] == 1.0):
            raise DataError("column 0 of the design must be identically 1 (intercept)")
        names = tuple(self.column_names) or ("(Intercept)",) + tuple(
            f"x{j}" for j in range(1, x.shape[1])
        )
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} column names for {x.shape[1]} columns")
        for j in range(1, x.shape[1]):
            if np.ptp(x[:, j]) == 0.0:
                raise ConstantColumnError(names[j])
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "column_names", names)
        if self.stamps is not None:
            stamps = np.array(self.stamps).reshape(-1)
            if stamps.shape[0] != y.shape[0]:
                raise DataError("stamps must have one entry per row")
            stamps.setflags(write=False)
            object.__setattr__(self, "stamps", stamps)

    @classmethod
    def from_predictors(cls, y, z, names: Sequence[str] | None = None, stamps=None):
        """Build from a predictor matrix without the intercept column."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        x = np.column_stack([np.ones(z.shape[0]), z])
        cols = ("(Intercept)",) + tuple(names) if names is not None else ()
        return cls(y, x, cols, stamps)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1] - 1

    @property
    def predictor_names(self) -> tuple:
        return self.column_names[1:]

    def subset(self, rows, context: str = "") -> "DesignData":
        """Row subset; constant columns in the subset raise ``ConstantColumnError``."""
        rows = np.asarray(rows)
        stamps = None if self.stamps is None else self.stamps[rows]
        try:
            return DesignData(self.y[rows], self.x[rows], self.column_names, stamps)
        except ConstantColumnError as exc:
            raise ConstantColumnError(exc.column, context) from None


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Column centering/scaling (population sd) and coefficient back-transform."""

    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        z = x[:, 1:]
        center = z.mean(axis=0)
        scale = z.std(axis=0)
        return cls(center, scale)

    @classmethod
    def identity(cls, p: int) -> "Standardizer":
        return cls(np.zeros(p), np.ones(p))

    def transform(self, x: np.ndarray) -> np.ndarray:
        out = np.array(x, dtype=float)
        out[:, 1:] = (out[:, 1:] - self.center) / self.scale
        return out

    def to_original(self, beta_std: np.ndarray) -> np.ndarray:
        """Map a (p+1) x K sheet from standardized to original predictor units."""
        beta = np.array(beta_std, dtype=float)
        beta[1:] = beta_std[1:] / self.scale[:, None]
        beta[0] = beta_std[0] - self.center @ beta[1:]
        return beta

    def to_standardized(self, beta: np.ndarray) -> np.ndarray:
        out = np.array(beta, dtype=float)
        out[1:] = beta[1:] * self.scale[:, None]
        out[0] = beta[0] + self.center @ beta[1:]
        return out


@dataclass(frozen=True, eq=False)
class AugmentedView:
    """Implicit view of the stacked K-quantile regression.

    ``x`` is the working design (standardized unless ``standardize=False``),
    stored C-contiguous for the solver kernels.
    """

    data: DesignData
    n_quantiles: int
    standardize: bool = True
    x: np.ndarray = field(init=False, repr=False)
    scaler: Standardizer = field(init=False, repr=False)
    sq_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n_quantiles) < 1:
            raise UsageError("need at least one quantile")
        if self.standardize:
            scaler = Standardizer.fit(self.data.x)
        else:
            scaler = Standardizer.identity(self.data.p)
        x = np.ascontiguousarray(scaler.transform(self.data.x))
        x.setflags(write=False)
        sq = np.einsum("ij,ij->j", x, x)
        sq.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "scaler", scaler)
        object.__setattr__(self, "sq_norms", sq)

    @property
    def y(self) -> np.ndarray:
        return self.data.y

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def p(self) -> int:
        return self.data.p

    def residuals(self, beta: np.ndarray) -> np.ndarray:
        """n x K residual matrix y - X beta_k for a (p+1) x K sheet."""
        return self.y[:, None] - self.x @ beta


def _check_column(view: AugmentedView, j: int) -> int:
    if not (0 <= int(j) <= view.p):
        raise UsageError(f"column index {j} out of range 0..{view.p}")
    return int(j)


def column_group_gradient(view: AugmentedView, residuals, taus, gamma, j) -> np.ndarray:
    """Gradient block of group ``j`` of the smoothed loss (1/(2n)) sum_ik h^tau_k(r_ik).

    Entry k is ``-(1/n) sum_i x_ij * s'(r_ik)`` where ``s`` is the smoothed check
    loss; the quantile-k entry only involves quantile k's residuals.
    """
    j = _check_column(view, j)
    taus = validate_taus(taus)
    gamma = validate_gamma(gamma)
    r = np.asarray(residuals, dtype=float)
    if r.shape != (view.n, taus.size):
        raise UsageError(f"residuals must be {view.n} x {taus.size}, got {r.shape}")
    g = smoothed_check_grad(r, taus[None, :], gamma)
    return -(view.x[:, j] @ g) / view.n


def group_majorizer_eigenvalue(view: AugmentedView, gamma, j) -> float:
    """Largest eigenvalue of the curvature block of group ``j``: ||X_j||^2 / (n gamma).

    The block is a multiple of the identity, so this is exact.
    """
    j = _check_column(view, j)
    gamma = validate_gamma(gamma)
    return float(view.sq_norms[j] / (view.n * gamma))
