import csv
import math

import numpy as np
import pytest

from gqlasso.backtest import (BacktestPlan, ForecastLedger, historic_benchmarks, run_expanding,
                              score_ledger, stamp_seed)
from gqlasso.design import DesignData
from gqlasso.errors import InsufficientHistoryError, UsageError
from gqlasso.estimators import CvSettings, MethodSpec

TAUS = (0.1, 0.2, 0.5, 0.8, 0.9)
CV = CvSettings(folds=3, n_lambda=8)


def months(start_year, n):
    return np.array([(start_year + i // 12) * 100 + i % 12 + 1 for i in range(n)])


def stamped(rng, n=40, p=2, y=None):
    z = rng.normal(size=(n, p))
    if y is None:
        y = 0.5 * z[:, 0] + rng.normal(size=n)
    return DesignData.from_predictors(y, z, [f"z{j}" for j in range(p)], stamps=months(2000, n))


def plan(start=200201, end=200304, kind="gq-lasso", **kw):
    return BacktestPlan(start, end, MethodSpec(kind, TAUS), cv=CV, min_train=24, **kw)


def test_plan_validation():
    with pytest.raises(UsageError):
        plan(200305, 200301)
    with pytest.raises(UsageError):
        plan(refit_every=0)
    assert plan("2002-01", "2003-04").eval_start == 200201


def test_stamp_seed_is_stable():
    assert stamp_seed(0, 200201) == stamp_seed(0, 200201)
    assert stamp_seed(0, 200201) != stamp_seed(0, 200202)
    assert stamp_seed(1, 200201) != stamp_seed(0, 200201)


def test_burn_in_and_range_errors(rng):
    d = stamped(rng)
    with pytest.raises(InsufficientHistoryError):
        run_expanding(d, plan(200112, 200201))
    with pytest.raises(InsufficientHistoryError):
        run_expanding(d, plan(200201, 200305))


def test_ledger_layout_and_benchmarks(rng):
    d = stamped(rng)
    led = run_expanding(d, plan(refit_every=4))
    assert len(led) == 16
    np.testing.assert_array_equal(led.stamps, months(2000, 40)[24:])
    assert np.all(np.diff(led.stamps) > 0)
    for r, i in enumerate(range(24, 40)):
        assert led.bench_mean[r] == pytest.approx(d.y[:i].mean(), abs=1e-12)
        np.testing.assert_allclose(led.bench_q[r], np.quantile(d.y[:i], TAUS), atol=1e-12)
    np.testing.assert_allclose(led.pred_mean, led.pred.mean(axis=1))
    # lambda only changes at refits
    assert np.all(led.fit_lambda[0] == led.fit_lambda[3])


def test_determinism(rng):
    d = stamped(rng)
    a = run_expanding(d, plan(refit_every=2))
    b = run_expanding(d, plan(refit_every=2))
    for field in ("pred", "fit_lambda", "bench_q", "support_size"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))


def test_no_look_ahead(rng):
    d = stamped(rng)
    base = run_expanding(d, plan(200210, 200303))
    t = 36  # row of stamp 200301
    y = d.y.copy()
    y[t] += 50.0
    x = d.x.copy()
    x[t, 1] += 5.0
    hit = DesignData(y, x, d.column_names, d.stamps)
    moved = run_expanding(hit, plan(200210, 200303))
    upto = base.stamps <= 200301
    np.testing.assert_array_equal(base.pred[base.stamps < 200301],
                                  moved.pred[moved.stamps < 200301])
    np.testing.assert_array_equal(base.bench_q[upto], moved.bench_q[upto])
    np.testing.assert_array_equal(base.bench_mean[upto], moved.bench_mean[upto])
    assert not np.array_equal(base.bench_mean[~upto], moved.bench_mean[~upto])


def test_constant_response_flags_undefined_r2(rng):
    d = stamped(rng, y=np.full(40, 0.25))
    led = run_expanding(d, plan(refit_every=8))
    # the smoothed fit sits gamma * (1 - 2 tau) away, with gamma at its 1e-6 floor
    np.testing.assert_allclose(led.pred, 0.25, atol=1e-6)
    rep = score_ledger(led)["full"]
    assert math.isnan(rep.r2_mean)
    assert "r2_oos_undefined_zero_benchmark_loss" in rep.flags
    assert rep.ncq == 0


def _synthetic_ledger(rng, m=24):
    stamps = months(2001, m)
    y = rng.normal(size=m)
    pred = np.sort(rng.normal(size=(m, len(TAUS))), axis=1)
    pred[::5] = pred[::5, ::-1]  # some crossed rows
    bm = np.array([y[:i].mean() if i else 0.0 for i in range(m)])
    return ForecastLedger(stamps, y, pred, pred.mean(axis=1), bm, np.tile(np.quantile(y, TAUS), (m, 1)),
                          np.ones((m, len(TAUS))), np.full(m, 2), TAUS, "gq-lasso")


def test_counts_add_across_disjoint_windows(rng):
    led = _synthetic_ledger(rng)
    reps = score_ledger(led, [(200101, 200106), (200107, 200212)])
    assert reps["full"].ncq == reps["200101-200106"].ncq + reps["200107-200212"].ncq
    assert reps["full"].n_obs == 24
    assert set(reps["full"].interval_stats) == {"80", "60"}


def test_window_errors(rng):
    led = _synthetic_ledger(rng)
    with pytest.raises(UsageError):
        led.slice(199001, 199012)
    with pytest.raises(UsageError):
        score_ledger(led, [(200001, 200012)])


def test_historic_mean_predictor_scores_zero(rng):
    led = _synthetic_ledger(rng)
    led.pred_mean = led.bench_mean.copy()
    led.pred = led.bench_q.copy()
    reps = score_ledger(led, [(200101, 200112), (200201, 200212)])
    for rep in reps.values():
        assert rep.r2_mean == 0.0
        assert rep.r2_per_tau == [0.0] * len(TAUS)


def test_historic_benchmarks_need_history():
    with pytest.raises(InsufficientHistoryError):
        historic_benchmarks(np.arange(5.0), TAUS, 0)
    mean, q = historic_benchmarks(np.arange(5.0), [0.5], 4)
    assert mean == 1.5 and q[0] == 1.5


def test_ledger_csv(tmp_path, rng):
    led = _synthetic_ledger(rng, m=6)
    path = led.to_csv(tmp_path / "ledger.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0][:3] == ["stamp", "y", "pred_tau_0.1"]
    assert "bench_q_0.9" in rows[0] and rows[0][-1] == "support_size"
    assert len(rows) == 7
    assert float(rows[1][1]) == led.y[0]
