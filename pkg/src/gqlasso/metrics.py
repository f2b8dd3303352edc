"""Evaluation metrics for multi-quantile fits and forecasts.

Fractions are kept as fractions in [0, 1]; conversion to percent is a
display concern.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import UsageError
from .loss import check_loss, validate_taus

__all__ = [
    "EvalReport",
    "model_error",
    "crossing_counts",
    "selection_errors",
    "r2_insample",
    "r2_oos",
    "sign_error",
    "interval_stats",
    "interval_columns",
]

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    """Metric bundle for one model on one dataset or evaluation window.

    Fields that do not apply (e.g. FP/FN without a known truth) stay None.
    """

    n_obs: int = 0
    me_per_tau: list | None = None
    me_avg: float | None = None
    ncq: int | None = None
    pcq: float | None = None
    fp: float | None = None
    fn: float | None = None
    r2_mean: float | None = None
    r2_per_tau: list | None = None
    pes: float | None = None
    interval_stats: dict = field(default_factory=dict)
    taus: list | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        """Flat dict; interval entries become ``interval_<level>_<stat>`` keys, NaN becomes None."""
        d = asdict(self)
        intervals = d.pop("interval_stats")
        for level, stats in intervals.items():
            for key, value in stats.items():
                d[f"interval_{level}_{key}"] = value
        return _clean(d)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def model_error(beta_hat, beta_star, x, normalize: bool = False):
    """Per-quantile ``(b* - b)' X'X (b* - b)`` and its average over quantiles.

    With ``normalize=True`` the Gram matrix is ``X'X / n``, which keeps the
    value comparable across sample sizes.  Returns ``(per_tau, average)``.
    """
    bh = np.atleast_2d(np.asarray(beta_hat, dtype=float))
    bs = np.atleast_2d(np.asarray(beta_star, dtype=float))
    x = np.asarray(x, dtype=float)
    if bh.shape != bs.shape or bh.shape[0] != x.shape[1]:
        raise UsageError(f"shape mismatch: beta_hat {bh.shape}, beta_star {bs.shape}, x {x.shape}")
    fitted = x @ (bs - bh)
    per = np.einsum("ik,ik->k", fitted, fitted)
    if normalize:
        per = per / x.shape[0]
    return per, float(per.mean())


def crossing_counts(pred):
    """Count rows whose quantile predictions are not non-decreasing in tau.

    Returns ``(ncq, pcq)`` with pcq the fraction of rows.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    if pred.shape[0] == 0:
        raise UsageError("no predictions to check")
    crossed = np.any(np.diff(pred, axis=1) < 0, axis=1)
    ncq = int(crossed.sum())
    return ncq, ncq / pred.shape[0]


def selection_errors(support_hat, support_true):
    """False positives and false negatives averaged over quantiles.

    ``support_hat`` is a sequence of index sets (one per quantile);
    ``support_true`` is one set shared by all quantiles or a matching sequence.
    """
    hats = [frozenset(s) for s in support_hat]
    if isinstance(support_true, (set, frozenset)):
        trues = [frozenset(support_true)] * len(hats)
    else:
        trues = [frozenset(s) for s in support_true]
    if len(trues) != len(hats) or not hats:
        raise UsageError("need one true support per estimated support")
    fp = np.mean([len(h - t) for h, t in zip(hats, trues)])
    fn = np.mean([len(t - h) for h, t in zip(hats, trues)])
    return float(fp), float(fn)


def _ratio(num, den):
    return 1.0 - num / den if den > 0 else math.nan


def r2_insample(pred, y, taus=None):
    """In-sample R^2.

    Without ``taus``: ``1 - SSE / SST`` against the sample mean.  With
    ``taus`` (pred is n x K): per quantile, ``1 - sum rho(y - yhat) /
    sum rho(y - q)`` with ``q`` the sample tau-quantile of ``y``.
    """
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if taus is None:
        if pred.shape != y.shape:
            raise UsageError("prediction and response lengths differ")
        return _ratio(np.sum((y - pred) ** 2), np.sum((y - y.mean()) ** 2))
    taus = validate_taus(taus)
    pred = pred.reshape(y.size, taus.size)
    bench = np.quantile(y, taus)
    out = np.empty(taus.size)
    for k, tau in enumerate(taus):
        out[k] = _ratio(np.sum(check_loss(y - pred[:, k], tau)), np.sum(check_loss(y - bench[k], tau)))
    return out


def r2_oos(pred, y, benchmark, taus=None):
    """Out-of-sample R^2 against an expanding-window benchmark.

    ``benchmark`` must hold, for each prediction date, the historic mean (mean
    mode) or historic tau-quantiles (n x K, with ``taus``) of data strictly
    before that date.  Returns NaN where the benchmark loss is zero.
    """
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    bench = np.asarray(benchmark, dtype=float)
    if taus is None:
        if not (pred.shape == y.shape == bench.shape):
            raise UsageError("prediction, response and benchmark lengths differ")
        return _ratio(np.sum((y - pred) ** 2), np.sum((y - bench) ** 2))
    taus = validate_taus(taus)
    pred = pred.reshape(y.size, taus.size)
    bench = bench.reshape(y.size, taus.size)
    out = np.empty(taus.size)
    for k, tau in enumerate(taus):
        out[k] = _ratio(np.sum(check_loss(y - pred[:, k], tau)),
                        np.sum(check_loss(y - bench[:, k], tau)))
    return out


def sign_error(pred, y) -> float:
    """Fraction of observations whose predicted sign differs from the realized sign.

    Zero counts as positive on both sides.
    """
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape or y.size == 0:
        raise UsageError("prediction and response must be non-empty and the same length")
    zeros = int(np.sum(pred == 0) + np.sum(y == 0))
    if zeros:
        log.info("sign error: %d exact zeros counted as positive", zeros)
    return float(np.mean((pred >= 0) != (y >= 0)))


def interval_columns(taus, lower_tau, upper_tau):
    """Column indices of ``lower_tau`` and ``upper_tau`` within ``taus``."""
    taus = np.asarray(taus, dtype=float)
    idx = []
    for t in (lower_tau, upper_tau):
        hit = np.flatnonzero(np.isclose(taus, t, atol=1e-9))
        if hit.size == 0:
            raise UsageError(f"quantile level {t} was not fitted")
        idx.append(int(hit[0]))
    return tuple(idx)


def interval_stats(lower, upper, y) -> dict:
    """Average and sd of interval length, and coverage ``lower < y < upper``.

    Lengths of crossed intervals are negative and kept as they are.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (lower.shape == upper.shape == y.shape) or y.size == 0:
        raise UsageError("interval bounds and response must be non-empty and the same length")
    length = upper - lower
    cover = (lower < y) & (y < upper)
    return {
        "avg_length": float(length.mean()),
        "sd_length": float(length.std(ddof=1)) if y.size > 1 else 0.0,
        "coverage": float(cover.mean()),
    }
