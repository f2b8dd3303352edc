"""Expanding-window one-step-ahead forecasting.

At every evaluation month ``t`` the model is fitted on all rows strictly
before ``t`` and used to predict ``y_t`` from the (already lagged)
predictors at ``t``.  Historic benchmarks use the same prior rows.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data_io import month_index, parse_stamp
from .design import DesignData
from .errors import InsufficientHistoryError, NumericalError, SolverDivergenceError, UsageError
from .estimators import CvSettings, Method, MethodSpec, fit_method, predict_quantiles
from .metrics import EvalReport, crossing_counts, interval_columns, interval_stats, r2_oos, sign_error

__all__ = [
    "BacktestPlan",
    "ForecastLedger",
    "stamp_seed",
    "run_expanding",
    "score_ledger",
    "historic_benchmarks",
    "INTERVAL_LEVELS",
]

log = logging.getLogger(__name__)

MIN_TRAIN = 120
# coverage level -> (lower tau, upper tau)
INTERVAL_LEVELS = {"80": (0.1, 0.9), "60": (0.2, 0.8)}


@dataclass(frozen=True)
class BacktestPlan:
    """What to forecast and how.

    ``eval_start`` / ``eval_end`` are YYYYMM stamps (ints or strings).
    ``sub_windows`` are (start, end) stamp pairs scored separately.
    """

    eval_start: int
    eval_end: int
    method: MethodSpec
    cv: CvSettings = field(default_factory=lambda: CvSettings(folds=10))
    refit_every: int = 1
    sub_windows: tuple = ()
    min_train: int = MIN_TRAIN

    def __post_init__(self):
        object.__setattr__(self, "eval_start", parse_stamp(str(self.eval_start)))
        object.__setattr__(self, "eval_end", parse_stamp(str(self.eval_end)))
        if self.eval_end < self.eval_start:
            raise UsageError("eval_end precedes eval_start")
        if self.refit_every < 1:
            raise UsageError("refit_every must be >= 1")
        wins = tuple((parse_stamp(str(a)), parse_stamp(str(b))) for a, b in self.sub_windows)
        object.__setattr__(self, "sub_windows", wins)


@dataclass
class ForecastLedger:
    """One row per evaluation month.

    ``pred`` and ``bench_q`` are m x K; ``pred_mean`` is the average of the
    predicted quantiles (the mean forecast implied by an equally spaced tau
    grid); ``fit_lambda`` is m x K so per-quantile penalties fit too.
    """

    stamps: np.ndarray
    y: np.ndarray
    pred: np.ndarray
    pred_mean: np.ndarray
    bench_mean: np.ndarray
    bench_q: np.ndarray
    fit_lambda: np.ndarray
    support_size: np.ndarray
    taus: tuple
    method: str = ""

    def __len__(self) -> int:
        return int(self.stamps.size)

    def slice(self, start, end) -> "ForecastLedger":
        start, end = parse_stamp(str(start)), parse_stamp(str(end))
        keep = (self.stamps >= start) & (self.stamps <= end)
        if not keep.any():
            raise UsageError(f"window {start}-{end} contains no forecasts")
        return ForecastLedger(self.stamps[keep], self.y[keep], self.pred[keep],
                              self.pred_mean[keep], self.bench_mean[keep], self.bench_q[keep],
                              self.fit_lambda[keep], self.support_size[keep], self.taus, self.method)

    def to_csv(self, path) -> Path:
        """Columns: stamp, y, pred_tau_*, pred_mean, bench_mean, bench_q_*, lambda_*, support_size."""
        path = Path(path)
        tags = [f"{t:g}" for t in self.taus]
        header = (["stamp", "y"] + [f"pred_tau_{t}" for t in tags] + ["pred_mean", "bench_mean"]
                  + [f"bench_q_{t}" for t in tags] + [f"lambda_{t}" for t in tags] + ["support_size"])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                row = [int(self.stamps[i]), repr(float(self.y[i]))]
                row += [repr(float(v)) for v in self.pred[i]]
                row += [repr(float(self.pred_mean[i])), repr(float(self.bench_mean[i]))]
                row += [repr(float(v)) for v in self.bench_q[i]]
                row += [repr(float(v)) for v in self.fit_lambda[i]]
                row.append(int(self.support_size[i]))
                w.writerow(row)
        return path


def stamp_seed(base_seed: int, stamp: int) -> int:
    """Reproducible CV seed for the refit at ``stamp``."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(stamp)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def historic_benchmarks(y, taus, upto: int):
    """Mean and type-7 quantiles of ``y[:upto]``."""
    prior = np.asarray(y[:upto], dtype=float)
    if prior.size == 0:
        raise InsufficientHistoryError("no prior observations for the benchmark")
    return float(prior.mean()), np.quantile(prior, taus)


def _first_eval_row(data: DesignData, plan: BacktestPlan) -> tuple[int, int]:
    stamps = np.asarray(data.stamps, dtype=np.int64)
    midx = month_index(stamps)
    if np.any(np.diff(midx) <= 0):
        raise UsageError("data stamps must be strictly increasing")
    start, end = month_index(plan.eval_start), month_index(plan.eval_end)
    if start - midx[0] < plan.min_train:
        raise InsufficientHistoryError(
            f"eval_start {plan.eval_start} leaves {int(start - midx[0])} months of training data "
            f"after the first stamp {stamps[0]}; at least {plan.min_train} are required")
    if end > midx[-1]:
        raise InsufficientHistoryError(f"eval_end {plan.eval_end} is after the last stamp {stamps[-1]}")
    rows = np.flatnonzero((midx >= start) & (midx <= end))
    if rows.size == 0:
        raise InsufficientHistoryError("no observations inside the evaluation window")
    return int(rows[0]), int(rows[-1])


def run_expanding(data: DesignData, plan: BacktestPlan, progress=None) -> ForecastLedger:
    """Walk forward through the evaluation window, refitting on all prior rows.

    The penalty is cross-validated at every refit with a seed derived from
    the refit stamp, so two runs with the same plan give identical ledgers.
    ``progress`` is an optional callable receiving ``(done, total, stamp)``.
    """
    if data.stamps is None:
        raise UsageError("backtest needs stamped data")
    first, last = _first_eval_row(data, plan)
    taus = np.array(plan.method.taus)
    K = taus.size
    rows = range(first, last + 1)
    m = len(rows)
    out = {
        "pred": np.empty((m, K)), "bench_mean": np.empty(m), "bench_q": np.empty((m, K)),
        "lam": np.empty((m, K)), "support": np.empty(m, dtype=int),
    }
    fit = None
    for r, i in enumerate(rows):
        stamp = int(data.stamps[i])
        if r % plan.refit_every == 0 or fit is None:
            train = data.subset(np.arange(i), context=f"training slice before {stamp}")
            cv = replace(plan.cv, seed=stamp_seed(plan.cv.seed, stamp))
            try:
                fit = fit_method(plan.method.kind, train, taus, cv)
            except SolverDivergenceError as exc:
                raise SolverDivergenceError(str(exc), exc.lambda_index, stamp) from exc
            except NumericalError as exc:
                raise SolverDivergenceError(f"refit at {stamp} failed: {exc}", stamp=stamp) from exc
            if not fit.converged:
                log.warning("refit at %s did not fully converge (kkt %.3g)", stamp, fit.kkt_max_violation)
        out["pred"][r] = predict_quantiles(fit, data.x[i])[0]
        out["bench_mean"][r], out["bench_q"][r] = historic_benchmarks(data.y, taus, i)
        out["lam"][r] = np.broadcast_to(np.asarray(fit.lam, dtype=float), (K,))
        out["support"][r] = len(fit.union_support)
        if progress is not None:
            progress(r + 1, m, stamp)
    return ForecastLedger(
        stamps=np.asarray(data.stamps[first:last + 1], dtype=np.int64),
        y=np.asarray(data.y[first:last + 1], dtype=float),
        pred=out["pred"], pred_mean=out["pred"].mean(axis=1),
        bench_mean=out["bench_mean"], bench_q=out["bench_q"], fit_lambda=out["lam"],
        support_size=out["support"], taus=tuple(taus.tolist()),
        method=Method.parse(plan.method.kind).value,
    )


def _score(ledger: ForecastLedger) -> EvalReport:
    taus = np.array(ledger.taus)
    rep = EvalReport(n_obs=len(ledger), taus=taus.tolist())
    rep.ncq, rep.pcq = crossing_counts(ledger.pred)
    rep.r2_mean = r2_oos(ledger.pred_mean, ledger.y, ledger.bench_mean)
    rep.r2_per_tau = r2_oos(ledger.pred, ledger.y, ledger.bench_q, taus).tolist()
    if math.isnan(rep.r2_mean) or any(math.isnan(v) for v in rep.r2_per_tau):
        rep.flags.append("r2_oos_undefined_zero_benchmark_loss")
    med = np.flatnonzero(np.isclose(taus, 0.5))
    point = ledger.pred[:, med[0]] if med.size else ledger.pred_mean
    rep.pes = sign_error(point, ledger.y)
    for level, (lo, hi) in INTERVAL_LEVELS.items():
        try:
            a, b = interval_columns(taus, lo, hi)
        except UsageError:
            continue
        rep.interval_stats[level] = interval_stats(ledger.pred[:, a], ledger.pred[:, b], ledger.y)
    return rep


def score_ledger(ledger: ForecastLedger, sub_windows=()) -> dict:
    """EvalReport for the full ledger (key ``"full"``) and each sub-window.

    Sub-window keys are ``"YYYYMM-YYYYMM"``.  Benchmarks are taken from the
    ledger as is, so they still use every observation before each month.
    """
    out = {"full": _score(ledger)}
    lo, hi = int(ledger.stamps[0]), int(ledger.stamps[-1])
    for a, b in sub_windows:
        a, b = parse_stamp(str(a)), parse_stamp(str(b))
        if a < lo or b > hi:
            raise UsageError(f"window {a}-{b} lies outside the ledger span {lo}-{hi}")
        out[f"{a}-{b}"] = _score(ledger.slice(a, b))
    return out
