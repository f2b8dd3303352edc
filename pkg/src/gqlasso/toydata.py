"""Small synthetic monthly tables for smoke tests and demos."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["toy_monthly", "write_toy_csv", "bundled_toy_path"]


def toy_monthly(n_months: int = 50, start: int = 200001, seed: int = 0):
    """Return ``(stamps, columns)`` for a toy equity-premium-like table.

    Columns: ``ExRet`` plus predictors ``dp``, ``svar`` (positive), ``tbl``
    and ``infl``.  Returns depend on the previous month's ``dp`` and ``svar``
    so a one-month lag recovers a real signal.
    """
    rng = np.random.default_rng(seed)
    year, month = divmod(int(start), 100)
    months = (year * 12 + month - 1) + np.arange(n_months)
    stamps = (months // 12) * 100 + months % 12 + 1
    dp = np.cumsum(rng.normal(0, 0.05, n_months)) - 3.5
    svar = np.exp(rng.normal(-6.0, 0.5, n_months))
    tbl = np.abs(0.03 + np.cumsum(rng.normal(0, 0.002, n_months)))
    infl = rng.normal(0.002, 0.003, n_months)
    ret = np.empty(n_months)
    ret[0] = 0.005
    ret[1:] = 0.005 + 0.02 * (dp[:-1] + 3.5) - 2.0 * svar[:-1] + rng.standard_t(5, n_months - 1) * 0.04
    return stamps, {"ExRet": ret, "dp": dp, "svar": svar, "tbl": tbl, "infl": infl}


def write_toy_csv(path, n_months: int = 50, start: int = 200001, seed: int = 0) -> Path:
    stamps, cols = toy_monthly(n_months, start, seed)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["yyyymm", *cols])
        for i, s in enumerate(stamps):
            w.writerow([int(s)] + [f"{cols[c][i]:.10g}" for c in cols])
    return path


def bundled_toy_path() -> Path:
    """Path of the 50-row toy CSV shipped with the package."""
    return Path(__file__).with_name("data") / "toy_monthly.csv"
