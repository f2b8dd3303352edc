"""Loading and preparing monthly predictor tables, and run-configuration files.

Input CSV: header row required, first column a YYYYMM or YYYY-MM stamp,
remaining columns named.  Missing cells are empty or ``NA``.
"""
from __future__ import annotations

import ast
import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .design import DesignData
from .errors import DataError, UsageError
from .loss import validate_gamma, validate_taus

__all__ = [
    "PrepSpec",
    "PrepSummary",
    "RawTable",
    "RunConfig",
    "parse_stamp",
    "month_index",
    "read_table",
    "load_and_prepare",
    "write_prepared_csv",
    "load_design",
    "parse_run_config",
]

log = logging.getLogger(__name__)

MISSING = {"", "NA"}


@dataclass(frozen=True)
class PrepSpec:
    log_transform: tuple = ("svar", "dfy", "rdsp")
    lag_months: int = 1
    drop_threshold: float = 0.20
    response: str = "ExRet"

    def __post_init__(self):
        object.__setattr__(self, "log_transform", tuple(self.log_transform))
        if int(self.lag_months) < 0:
            raise UsageError("lag_months must be non-negative")
        if not 0 <= self.drop_threshold < 1:
            raise UsageError("drop_threshold must lie in [0, 1)")

    @classmethod
    def identity(cls, response: str) -> "PrepSpec":
        """No log transform, no lag: reloads an already prepared table unchanged."""
        return cls((), 0, 0.999999, response)


@dataclass
class PrepSummary:
    kept: list = field(default_factory=list)
    dropped_missing: dict = field(default_factory=dict)
    log_transformed: list = field(default_factory=list)
    log_not_found: list = field(default_factory=list)
    rows_in: int = 0
    rows_dropped: int = 0
    rows_out: int = 0
    lag_months: int = 0

    def text(self) -> str:
        lines = [
            f"rows: {self.rows_in} read, {self.rows_dropped} dropped, {self.rows_out} kept",
            f"predictors kept ({len(self.kept)}): {', '.join(self.kept)}",
        ]
        if self.dropped_missing:
            dropped = ", ".join(f"{k} ({v:.1%} missing)" for k, v in self.dropped_missing.items())
            lines.append(f"predictors dropped: {dropped}")
        if self.log_transformed:
            lines.append(f"log-transformed: {', '.join(self.log_transformed)}")
        lines.append(f"predictors lagged by {self.lag_months} month(s)")
        return "\n".join(lines)


@dataclass
class RawTable:
    stamps: np.ndarray  # int YYYYMM
    columns: dict  # name -> float array with NaN for missing

    @property
    def names(self) -> list:
        return list(self.columns)


def parse_stamp(text: str) -> int:
    """``"199201"`` or ``"1992-01"`` -> 199201."""
    t = text.strip()
    if len(t) == 7 and t[4] == "-":
        t = t[:4] + t[5:]
    if len(t) != 6 or not t.isdigit():
        raise ValueError(f"bad stamp {text!r}")
    month = int(t[4:])
    if not 1 <= month <= 12:
        raise ValueError(f"bad month in stamp {text!r}")
    return int(t)


def month_index(stamp) -> np.ndarray:
    """Months since year 0 for YYYYMM stamps (consecutive months differ by 1)."""
    s = np.asarray(stamp, dtype=np.int64)
    return (s // 100) * 12 + (s % 100 - 1)


def read_table(path) -> RawTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2:
            raise DataError(f"{path}: need a stamp column and at least one data column")
        names = header[1:]
        if len(set(names)) != len(names):
            raise DataError(f"{path}: duplicate column names")
        stamps, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                stamps.append(parse_stamp(rec[0]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            vals = []
            for name, cell in zip(names, rec[1:]):
                cell = cell.strip()
                if cell in MISSING:
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {name!r}: cannot parse {cell!r}") from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    stamps = np.array(stamps, dtype=np.int64)
    idx = month_index(stamps)
    if np.any(np.diff(idx) <= 0):
        bad = int(np.flatnonzero(np.diff(idx) <= 0)[0]) + 1
        raise DataError(f"{path}: stamps not strictly increasing at {stamps[bad]}")
    if np.any(np.diff(idx) != 1):
        bad = int(np.flatnonzero(np.diff(idx) != 1)[0]) + 1
        raise DataError(f"{path}: gap in monthly stamps before {stamps[bad]}")
    arr = np.array(rows, dtype=float)
    return RawTable(stamps, {n: arr[:, i] for i, n in enumerate(names)})


def load_and_prepare(path, spec: PrepSpec | None = None):
    """Read, clean, transform and lag a monthly table.

    Steps: drop predictors with more than ``drop_threshold`` missing over the
    full sample; take natural logs of the listed predictors; shift all
    predictors forward by ``lag_months`` so row t pairs y_t with x_{t-lag};
    drop rows with any missing value; add the intercept.

    Returns ``(DesignData, PrepSummary)``; the design carries YYYYMM stamps of
    the response.
    """
    spec = spec or PrepSpec()
    table = read_table(path)
    if spec.response not in table.columns:
        raise DataError(f"response column {spec.response!r} not found")
    summary = PrepSummary(rows_in=table.stamps.size, lag_months=int(spec.lag_months))
    y = table.columns[spec.response]
    preds = {}
    for name in table.names:
        if name == spec.response:
            continue
        col = table.columns[name]
        frac = float(np.mean(np.isnan(col)))
        if frac > spec.drop_threshold:
            summary.dropped_missing[name] = frac
        else:
            preds[name] = col.copy()
    for name in spec.log_transform:
        if name not in preds:
            summary.log_not_found.append(name)
            continue
        col = preds[name]
        bad = np.flatnonzero(~np.isnan(col) & (col <= 0))
        if bad.size:
            raise DataError(f"column {name!r} has non-positive value {col[bad[0]]!r} "
                            f"at stamp {table.stamps[bad[0]]}; cannot take logs")
        preds[name] = np.log(col)
        summary.log_transformed.append(name)
    lag = int(spec.lag_months)
    names = list(preds)
    z = np.column_stack([preds[n] for n in names]) if names else np.empty((y.size, 0))
    if lag:
        shifted = np.full_like(z, np.nan)
        shifted[lag:] = z[:-lag]
        z = shifted
    ok = ~np.isnan(y) & ~np.any(np.isnan(z), axis=1)
    summary.rows_dropped = int((~ok).sum())
    summary.rows_out = int(ok.sum())
    summary.kept = names
    if summary.rows_out < 2:
        raise DataError("fewer than two complete rows after preparation")
    data = DesignData.from_predictors(y[ok], z[ok], names, stamps=table.stamps[ok])
    return data, summary


def write_prepared_csv(data: DesignData, path, response: str = "y") -> Path:
    """Write stamp, response and predictors at full round-trip precision."""
    if data.stamps is None:
        raise UsageError("data has no stamps")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["stamp", response] + list(data.predictor_names))
        for s, yi, row in zip(data.stamps, data.y, data.x[:, 1:]):
            w.writerow([int(s), repr(float(yi))] + [repr(float(v)) for v in row])
    return path


STAMP_HEADERS = {"stamp", "date", "yyyymm", "month", "time"}


def load_design(path, spec: PrepSpec | None = None):
    """Load either a stamped monthly table or a plain numeric table.

    A first header cell named like a date (``stamp``, ``date``, ``yyyymm``...)
    routes to :func:`load_and_prepare`.  Otherwise every column is numeric,
    the response is ``spec.response`` if present (else the first column), and
    no transformation, lag or stamp is applied.  Returns ``(data, summary)``
    where ``summary`` is None for plain tables.
    """
    spec = spec or PrepSpec()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise DataError(f"{path}: empty file")
    if header[0].strip().lower() in STAMP_HEADERS:
        return load_and_prepare(path, spec)
    names = [h.strip() for h in header]
    try:
        arr = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float,
                            missing_values="NA", filling_values=np.nan, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if arr.shape[1] != len(names):
        raise DataError(f"{path}: rows do not match the header width")
    if np.isnan(arr).any():
        raise DataError(f"{path}: missing or non-numeric cells in a plain table")
    r = names.index(spec.response) if spec.response in names else 0
    keep = [j for j in range(len(names)) if j != r]
    data = DesignData.from_predictors(arr[:, r], arr[:, keep], [names[j] for j in keep])
    return data, None


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    """Every setting a run needs, with defaults filled in.

    Built by :func:`parse_run_config`; convert with the ``*_settings`` helpers
    in the modules that consume it.
    """

    method: str = "gq-lasso"
    taus: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    # solver
    gamma: float | None = None
    gamma_factor: float = 0.1
    tol: float = 1e-7
    max_cycles: int = 10000
    kkt_rel: float = 1e-4
    kkt_abs: float = 1e-8
    # path and cross-validation
    folds: int = 10
    n_lambda: int = 100
    lambda_ratio: float | None = None
    one_se: bool = False
    seed: int = 0
    # backtest
    eval_start: int | None = None
    eval_end: int | None = None
    refit_every: int = 1
    min_train: int = 120
    windows: tuple = ()
    # data preparation
    response: str = "ExRet"
    log_transform: tuple = ("svar", "dfy", "rdsp")
    lag_months: int = 1
    drop_threshold: float = 0.20

    def __post_init__(self):
        from .estimators import Method

        Method.parse(self.method)
        object.__setattr__(self, "taus", tuple(validate_taus(self.taus).tolist()))
        if self.gamma is not None:
            validate_gamma(self.gamma)
        if self.folds < 2:
            raise UsageError("folds must be >= 2")
        if self.n_lambda < 2:
            raise UsageError("n_lambda must be >= 2")
        if self.lambda_ratio is not None and not 0 < self.lambda_ratio < 1:
            raise UsageError("lambda_ratio must lie in (0, 1)")
        if self.refit_every < 1:
            raise UsageError("refit_every must be >= 1")
        if self.min_train < 2:
            raise UsageError("min_train must be >= 2")
        for name in ("eval_start", "eval_end"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, parse_stamp(str(v)))
        object.__setattr__(self, "windows", _parse_windows(self.windows))
        object.__setattr__(self, "log_transform", tuple(self.log_transform))
        PrepSpec(self.log_transform, self.lag_months, self.drop_threshold, self.response)

    def solver_config(self):
        from .solver import SolverConfig

        return SolverConfig(gamma=self.gamma, gamma_factor=self.gamma_factor, tol=self.tol,
                            max_cycles=self.max_cycles, kkt_rel=self.kkt_rel, kkt_abs=self.kkt_abs)

    def cv_settings(self, lam=None):
        from .estimators import CvSettings

        return CvSettings(folds=self.folds, n_lambda=self.n_lambda, ratio=self.lambda_ratio,
                          seed=self.seed, one_se=self.one_se, lam=lam, solver=self.solver_config())

    def prep_spec(self) -> PrepSpec:
        return PrepSpec(self.log_transform, self.lag_months, self.drop_threshold, self.response)

    def method_spec(self):
        from .estimators import MethodSpec

        return MethodSpec(self.method, self.taus)


def _parse_windows(value) -> tuple:
    """Accept ``[(start, end), ...]`` or strings like ``"196501-197212"``."""
    out = []
    for item in value or ():
        if isinstance(item, str):
            parts = item.replace(":", "-").split("-")
            if len(parts) == 2:
                a, b = parts
            elif len(parts) == 4:
                a, b = "-".join(parts[:2]), "-".join(parts[2:])
            else:
                raise UsageError(f"cannot parse window {item!r}")
        else:
            a, b = item
        a, b = parse_stamp(str(a)), parse_stamp(str(b))
        if b < a:
            raise UsageError(f"window {item!r} ends before it starts")
        out.append((a, b))
    return tuple(out)


_BOOLS = {"true": True, "false": False, "yes": True, "no": False, "on": True, "off": False}
_NONE = {"none", "null", ""}


def _parse_value(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in _BOOLS:
        return _BOOLS[low]
    if low in _NONE:
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if "," in text:
            return [_parse_value(p) for p in text.split(",")]
        return text


def parse_run_config(path) -> RunConfig:
    """Parse a flat ``key = value`` file into a validated :class:`RunConfig`.

    ``#`` starts a comment.  Values may be numbers, booleans, quoted or bare
    strings, and lists (``[0.1, 0.5]`` or ``0.1, 0.5``).  Unknown keys are an
    error.
    """
    known = {f.name for f in fields(RunConfig)}
    values = {}
    text = Path(path).read_text(encoding="utf-8") if path is not None else ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        value = _parse_value(raw)
        if isinstance(value, list):
            value = tuple(value)
        if key in ("log_transform", "windows") and isinstance(value, str):
            value = (value,)
        values[key] = value
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise UsageError(f"{path}: {exc}") from None
