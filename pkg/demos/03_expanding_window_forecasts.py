"""Out-of-sample quantile forecasts with an expanding window.

A monthly table is loaded, the volatility column is logged and every
predictor is lagged one month, so the forecast for month t only uses data
known at t-1.  Each month the model is re-fitted (with fresh
cross-validation) on all earlier rows and predicts the next month.  Scores
are measured against the historical mean and historical quantiles.

The table here is a bundled synthetic series shaped like the equity-premium
data; point ``path`` at a real file with the same layout to run the study.

Run:  python demos/03_expanding_window_forecasts.py
"""
import tempfile
from pathlib import Path

from gqlasso.backtest import BacktestPlan, run_expanding, score_ledger
from gqlasso.data_io import load_and_prepare
from gqlasso.estimators import CvSettings, MethodSpec
from gqlasso.toydata import write_toy_csv

taus = (0.1, 0.2, 0.5, 0.8, 0.9)
with tempfile.TemporaryDirectory() as tmp:
    path = write_toy_csv(Path(tmp) / "monthly.csv", n_months=180, start=199001, seed=11)
    data, summary = load_and_prepare(path)
print(summary.text())
print()

for method in ("gq-lasso", "rq-lasso"):
    plan = BacktestPlan(200101, 200412, MethodSpec(method, taus), cv=CvSettings(folds=5, n_lambda=30),
                        refit_every=3, sub_windows=((200101, 200212), (200301, 200412)))
    reports = score_ledger(run_expanding(data, plan), plan.sub_windows)
    print(method)
    for window, rep in reports.items():
        r2 = ", ".join(f"{v:+.3f}" for v in rep.r2_per_tau)
        cov80 = rep.interval_stats["80"]["coverage"]
        print(f"  {window:>13}: months {rep.n_obs:3d}  crossings {100 * rep.pcq:5.1f}%  "
              f"80% band covers {100 * cov80:5.1f}%  R2 by tau [{r2}]")
    print()
