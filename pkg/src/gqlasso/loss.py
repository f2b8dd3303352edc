"""Quantile check loss, its Huber smoothing, and derivatives.

All functions accept scalars or arrays and broadcast in the usual numpy way.
Scalars in give Python floats out.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError

__all__ = [
    "check_loss",
    "huber_loss",
    "smoothed_check_loss",
    "smoothed_check_grad",
    "validate_taus",
    "validate_gamma",
]


def _finite(u):
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("loss argument must be finite")
    return arr


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


def validate_taus(taus) -> np.ndarray:
    """Return ``taus`` as a float array after checking 0 < tau < 1, strictly increasing."""
    arr = np.atleast_1d(np.asarray(taus, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("taus must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0) or np.any(arr >= 1):
        raise DomainError(f"quantile levels must lie in (0, 1), got {arr.tolist()}")
    if np.any(np.diff(arr) <= 0):
        raise DomainError(f"quantile levels must be strictly increasing, got {arr.tolist()}")
    return arr


def validate_gamma(gamma):
    """Check gamma > 0 and finite; scalars come back as float, arrays as arrays."""
    g = np.asarray(gamma, dtype=float)
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise DomainError(f"smoothing width must be positive and finite, got {gamma!r}")
    return float(g) if g.ndim == 0 else g


def check_loss(u, tau):
    """rho_tau(u) = u * (tau - 1{u < 0})."""
    arr = _finite(u)
    val = np.where(arr >= 0, tau * arr, (tau - 1.0) * arr)
    return _out(val, u)


def huber_loss(u, gamma):
    """Classical Huber loss: u^2/(2 gamma) inside the band, |u| - gamma/2 outside.

    The band edge |u| == gamma uses the quadratic branch; both agree there.
    """
    arr = _finite(u)
    gamma = validate_gamma(gamma)
    a = np.abs(arr)
    val = np.where(a <= gamma, arr * arr / (2.0 * gamma), a - 0.5 * gamma)
    return _out(val, u)


def smoothed_check_loss(u, tau, gamma):
    """Huber-approximated check loss, (1/2) * [h_gamma(u) + (2 tau - 1) u].

    Outside the band this equals ``check_loss(u, tau) - gamma / 4``; the gap
    to the check loss never exceeds gamma / 4.
    """
    arr = _finite(u)
    h = np.asarray(huber_loss(arr, gamma))
    val = 0.5 * (h + (2.0 * tau - 1.0) * arr)
    return _out(val, u)


def smoothed_check_grad(u, tau, gamma):
    """Derivative of :func:`smoothed_check_loss` with respect to ``u``.

    Equals tau above the band, tau - 1 below it, and is linear with slope
    1/(2 gamma) inside.
    """
    arr = _finite(u)
    gamma = validate_gamma(gamma)
    inner = 0.5 * (arr / gamma + 2.0 * tau - 1.0)
    val = np.where(arr > gamma, tau, np.where(arr < -gamma, tau - 1.0, inner))
    return _out(val, u)
