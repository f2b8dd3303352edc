"""Acceptance criteria 1-11.

Each test records a PASS/FAIL line in the shared ``ACCEPTANCE`` table, which
is printed at the end of the session (and by ``test_summary``).  Criteria 3
and 4 inspect every solver call and gQ-Lasso fit made by the whole suite, so
they are ordered last by ``conftest.py``.

The Monte Carlo runs of criterion 6 are cached for the session and reused by
criterion 7 and by the crossing-order checks at the bottom of this file.
"""
from __future__ import annotations

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE, GQ_SUPPORTS, OVERHEAD, SOLVES, acceptance_lines
from gqlasso.backtest import BacktestPlan, run_expanding, score_ledger
from gqlasso.data_io import load_and_prepare
from gqlasso.design import AugmentedView, DesignData
from gqlasso.diagnostics import cone_check, consistency_trend, oracle_lambda
from gqlasso.estimators import CvSettings, MethodSpec, fit_method, predict_quantiles
from gqlasso.experiments import SIM_TAUS, replicate_seed, run_replicates
from gqlasso.loss import check_loss, smoothed_check_grad, smoothed_check_loss
from gqlasso.metrics import crossing_counts, interval_stats
from gqlasso.path import build_path, lambda_max
from gqlasso.simulate import ErrorKind, SimScenario, generate, oracle_coefficients
from gqlasso.solver import SolverConfig, solve_fixed_lambda
from gqlasso.toydata import write_toy_csv
from oracles import cvx_solve, smoothed_objective

REGIMES = ("normal", "t2", "hetero", "asym", "hetero-asym")
METHODS = ("gq-lasso", "rq-lasso", "gcqr")
SIM_NS = (200, 1000)
SIM_P = 20
SIM_REPS = 20
SIM_SEED = 2024
SIM_CV = CvSettings(folds=5)
NINE = tuple(np.round(np.arange(0.1, 1.0, 0.1), 10))


def record(key: int, ok: bool, detail: str, part: str | None = None) -> None:
    """Store a criterion outcome; multi-part criteria fail if any part fails."""
    label = f"({part}) {detail}" if part else detail
    status = "PASS" if ok else "FAIL"
    if part and key in ACCEPTANCE:
        prev_status, prev_detail = ACCEPTANCE[key]
        status = "FAIL" if "FAIL" in (prev_status, status) else "PASS"
        label = f"{prev_detail}; {label}"
    ACCEPTANCE[key] = (status, label)


# ---------------------------------------------------------------------------
# shared Monte Carlo runs


@pytest.fixture(scope="session")
def sim_cache():
    return {}


@pytest.fixture(scope="session")
def sim_records(sim_cache):
    """20 replicates of every method, regime and N (criterion 6)."""
    start, extra = time.perf_counter(), OVERHEAD[0]
    out = {}
    for err in REGIMES:
        for n in SIM_NS:
            out[err, n] = run_replicates(SimScenario(n, SIM_P, err), METHODS, SIM_REPS, SIM_SEED,
                                         SIM_TAUS, SIM_CV, cache=sim_cache)
    out["wall"] = time.perf_counter() - start
    out["elapsed"] = out["wall"] - (OVERHEAD[0] - extra)
    return out


def _values(records, method, field):
    return np.array([getattr(r, field) for r in records if r.method == method], dtype=float)


# ---------------------------------------------------------------------------
# 1. loss fidelity


def test_c01_loss_fidelity():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    m = 10**5
    u = rng.normal(0, 2, m) * rng.choice([0.01, 1.0, 10.0], m)
    tau = rng.uniform(0.01, 0.99, m)
    gamma = 10 ** rng.uniform(-4, 0, m)
    gap = np.abs(smoothed_check_loss(u, tau, gamma) - check_loss(u, tau))
    excess = float(np.max(gap - gamma / 4))
    h = 1e-5
    away = np.abs(np.abs(u) - gamma) > 2 * h
    fd = (smoothed_check_loss(u + h, tau, gamma) - smoothed_check_loss(u - h, tau, gamma)) / (2 * h)
    fd_err = float(np.max(np.abs(fd - smoothed_check_grad(u, tau, gamma))[away]))
    elapsed = time.perf_counter() - start
    ok = excess <= 1e-12 and fd_err <= 1e-6 and elapsed < 5
    record(1, ok, f"max(gap - gamma/4)={excess:.2e}, max FD error={fd_err:.2e}, {elapsed:.2f}s")
    assert excess <= 1e-12
    assert fd_err <= 1e-6
    assert elapsed < 5


# ---------------------------------------------------------------------------
# 2. solver vs generic convex optimizer


def test_c02_solver_matches_convex_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    taus = [0.3, 0.7]
    worst = 0.0
    for _ in range(10):
        z = rng.normal(size=(30, 3))
        y = z @ np.array([1.0, -0.5, 0.0]) + rng.standard_t(3, 30)
        view = AugmentedView(DesignData.from_predictors(y, z), 2)
        cfg = SolverConfig()
        gamma = cfg.resolve_gamma(view.y)
        lmax = lambda_max(view, taus, cfg)
        for frac in (0.05, 0.3, 0.7):
            lam = frac * lmax
            fit = solve_fixed_lambda(view, taus, lam, config=cfg)
            ref = cvx_solve(view.x, view.y, taus, gamma, lam)
            f_gmd = smoothed_objective(view.x, view.y, fit.coefficients, taus, gamma, lam)
            f_ref = smoothed_objective(view.x, view.y, ref, taus, gamma, lam)
            worst = max(worst, (f_gmd - f_ref) / abs(f_ref))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 120
    record(2, ok, f"30 solves, worst relative objective excess {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-4
    assert elapsed < 120


# ---------------------------------------------------------------------------
# 5. strong-rule safety


def test_c05_strong_rule_safety():
    # Both paths are solved well below 1e-6 so that any gap is due to screening;
    # at the default tolerances each path is only accurate to about 1e-4 lambda.
    tight = SolverConfig(tol=1e-10, kkt_rel=1e-7)
    start = time.perf_counter()
    worst = default_gap = 0.0
    screened_out = 0
    for err in REGIMES:
        for s in range(5):
            data = generate(SimScenario(200, SIM_P, err, seed=replicate_seed(5, s)))
            view = AugmentedView(data, len(SIM_TAUS))
            on = build_path(view, SIM_TAUS, screen=True, config=tight)
            off = build_path(view, SIM_TAUS, screen=False, config=tight)
            np.testing.assert_array_equal(on.lambdas, off.lambdas)
            for a, b in zip(on.fits, off.fits):
                worst = max(worst, float(np.max(np.abs(a.coefficients - b.coefficients))))
            screened_out += int(np.sum(SIM_P - on.screened))
            loose = [build_path(view, SIM_TAUS, screen=flag) for flag in (True, False)]
            for a, b in zip(loose[0].fits, loose[1].fits):
                default_gap = max(default_gap, float(np.max(np.abs(a.coefficients - b.coefficients))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 600 and screened_out > 0
    record(5, ok, f"25 paths, max coefficient gap {worst:.2e} at tol 1e-10 "
                  f"({default_gap:.1e} at default tolerances), "
                  f"{screened_out} group-steps screened out, {elapsed:.0f}s")
    assert screened_out > 0
    assert worst <= 1e-6
    assert elapsed < 600


# ---------------------------------------------------------------------------
# 6. desk-scale simulation study


def test_c06a_no_false_negatives(sim_records):
    fns = {n: _values(sim_records["normal", n], "gq-lasso", "fn") for n in SIM_NS}
    ok = all(v.mean() == 0.0 for v in fns.values())
    record(6, ok, "gQ mean FN " + ", ".join(f"N={n}: {v.mean():.3f}" for n, v in fns.items()), "a")
    for v in fns.values():
        assert v.mean() == 0.0


def test_c06b_false_positives_near_published(sim_records):
    fp = _values(sim_records["normal", 200], "gq-lasso", "fp")
    ok = abs(fp.mean() - 8.73) <= 2.5
    record(6, ok, f"gQ mean FP at N=200 {fp.mean():.2f} (target 8.73 +- 2.5)", "b")
    assert abs(fp.mean() - 8.73) <= 2.5


def test_c06c_crossing_order_under_heteroscedasticity(sim_records):
    parts, ok = [], True
    for n in SIM_NS:
        med = {m: float(np.median(_values(sim_records["hetero", n], m, "ncq"))) for m in METHODS}
        good = med["gq-lasso"] < med["rq-lasso"] and med["gq-lasso"] < med["gcqr"]
        ok &= good
        parts.append(f"N={n} median NCQ gQ/rq/GCQR {med['gq-lasso']:g}/{med['rq-lasso']:g}/{med['gcqr']:g}")
    record(6, ok, "; ".join(parts), "c")
    assert ok, parts


def test_c06d_model_error_falls_with_n(sim_records):
    bad = []
    for err in REGIMES:
        for m in METHODS:
            small = _values(sim_records[err, 200], m, "me").mean()
            large = _values(sim_records[err, 1000], m, "me").mean()
            if not large < small:
                bad.append(f"{m}/{err}: {small:.3f} -> {large:.3f}")
    elapsed = sim_records["elapsed"]
    ok = not bad and elapsed < 1800
    detail = "ME falls for all 15 method/regime pairs" if not bad else "ME rises for " + ", ".join(bad)
    record(6, ok, f"{detail}; study runtime {elapsed / 60:.1f} min "
                  f"({sim_records['wall'] / 60:.1f} min with KKT instrumentation)", "d")
    assert not bad
    assert elapsed < 1800


# ---------------------------------------------------------------------------
# 7. consistency trend


def test_c07_consistency_trend(sim_records, sim_cache):
    ns = (200, 500, 1000)
    med = consistency_trend(SimScenario(200, SIM_P), ns, SIM_TAUS, SIM_REPS, SIM_SEED, SIM_CV,
                            cache=sim_cache)
    vals = [med[n] for n in ns]
    ok = vals[0] > vals[1] > vals[2]
    record(7, ok, "median ||b - b*|| " + ", ".join(f"n={n}: {v:.4f}" for n, v in zip(ns, vals)))
    assert ok, vals


# ---------------------------------------------------------------------------
# 8. cone diagnostic


def test_c08_cone_condition():
    start = time.perf_counter()
    holds, met = [], 0
    for r in range(50):
        sc = SimScenario(1000, SIM_P, seed=replicate_seed(8, r))
        data = generate(sc)
        truth = oracle_coefficients(sc, SIM_TAUS)
        cap = oracle_lambda(data, truth)
        lam = 2.0 * cap
        fit = fit_method("gq-lasso", data, SIM_TAUS, CvSettings(lam=lam))
        rep = cone_check(fit, truth, lam, cap)
        if rep.condition_met:
            met += 1
            holds.append(rep.cone_holds)
    rate = float(np.mean(holds)) if holds else math.nan
    elapsed = time.perf_counter() - start
    ok = met > 0 and rate >= 0.9 and elapsed < 900
    record(8, ok, f"cone holds in {rate:.0%} of {met} replicates with lambda >= 2 Lambda, {elapsed:.0f}s")
    assert met > 0
    assert rate >= 0.9
    assert elapsed < 900


# ---------------------------------------------------------------------------
# 9. oracle coverage


def test_c09_oracle_coverage():
    start = time.perf_counter()
    worst, where = 0.0, ""
    for kind in ErrorKind:
        if not kind.exact_truth:
            continue
        sc = SimScenario(10**6, 4, kind, seed=9)
        data = generate(sc)
        beta = oracle_coefficients(sc, NINE).beta
        frac = np.mean(data.y[:, None] <= data.x @ beta, axis=0)
        dev = np.abs(frac - np.array(NINE))
        if dev.max() > worst:
            worst, where = float(dev.max()), f"{kind.value} tau={NINE[int(dev.argmax())]}"
    elapsed = time.perf_counter() - start
    ok = worst <= 0.003 and elapsed < 120
    record(9, ok, f"worst |coverage - tau| {worst:.4f} ({where}), 4 regimes x 9 levels, {elapsed:.1f}s")
    assert worst <= 0.003
    assert elapsed < 120


# ---------------------------------------------------------------------------
# 10. backtest integrity


def test_c10_backtest_integrity(tmp_path):
    raw = write_toy_csv(tmp_path / "raw.csv", n_months=150, start=199001, seed=3)
    plan = BacktestPlan(200002, 200106, MethodSpec("gq-lasso", (0.1, 0.5, 0.9)),
                        cv=CvSettings(folds=3, n_lambda=20), refit_every=1, min_train=120)
    data, _ = load_and_prepare(raw)
    base = run_expanding(data, plan)
    # benchmark re-derivation straight from the prepared rows
    gap = 0.0
    for r, stamp in enumerate(base.stamps):
        prior = data.y[data.stamps < stamp]
        gap = max(gap, abs(base.bench_mean[r] - prior.mean()),
                  float(np.max(np.abs(base.bench_q[r] - np.quantile(prior, base.taus)))))
    # inject a large shock into the raw file at one month
    t = 200010
    lines = raw.read_text().splitlines()
    row = next(i for i, line in enumerate(lines) if line.startswith(str(t)))
    cells = lines[row].split(",")
    cells[1] = repr(float(cells[1]) + 5.0)
    cells[2] = repr(float(cells[2]) + 1.0)
    cells[3] = repr(float(cells[3]) * 3.0)
    lines[row] = ",".join(cells)
    shocked_path = tmp_path / "shocked.csv"
    shocked_path.write_text("\n".join(lines) + "\n")
    shocked, _ = load_and_prepare(shocked_path)
    moved = run_expanding(shocked, plan)
    upto = base.stamps <= t
    same = all(np.array_equal(getattr(base, f)[upto], getattr(moved, f)[upto])
               for f in ("pred", "bench_mean", "bench_q", "fit_lambda"))
    later_changed = not np.array_equal(base.pred[~upto], moved.pred[~upto])
    ok = same and later_changed and gap <= 1e-12
    record(10, ok, f"{int(upto.sum())} forecasts at or before the shock unchanged={same}, "
                   f"later forecasts moved={later_changed}, benchmark gap {gap:.1e}")
    assert same
    assert later_changed
    assert gap <= 1e-12


# ---------------------------------------------------------------------------
# 11. equity dataset (external file)

EQUITY = os.environ.get("GQLASSO_EQUITY_CSV")
EQUITY_WINDOWS = ((196501, 197212), (197601, 200712), (201001, 201912))


@pytest.mark.skipif(not EQUITY, reason="set GQLASSO_EQUITY_CSV to the Goyal-derived monthly CSV")
def test_c11_equity_dataset():
    refit = int(os.environ.get("GQLASSO_EQUITY_REFIT", "12"))
    data, _ = load_and_prepare(Path(EQUITY))
    cv = CvSettings(folds=10)
    pcq = {}
    for m in ("gq-lasso", "rq-lasso"):
        fit = fit_method(m, data, NINE, cv)
        pcq[m] = crossing_counts(predict_quantiles(fit, data.x))[1] * 100
    full_ok = abs(pcq["gq-lasso"] - 3.956) <= 3 and abs(pcq["rq-lasso"] - 15.665) <= 3
    reports = {}
    for m in ("gq-lasso", "rq-lasso"):
        plan = BacktestPlan(196501, 202112, MethodSpec(m, NINE), cv=cv, refit_every=refit,
                            sub_windows=EQUITY_WINDOWS)
        reports[m] = score_ledger(run_expanding(data, plan), plan.sub_windows)
    order_ok = all(reports["gq-lasso"][k].pcq < reports["rq-lasso"][k].pcq for k in reports["gq-lasso"])
    cp80 = reports["gq-lasso"]["full"].interval_stats["80"]["coverage"]
    cp_ok = abs(cp80 - 0.81) <= 0.04
    ok = full_ok and order_ok and cp_ok
    record(11, ok, f"full-sample PCQ gQ {pcq['gq-lasso']:.3f} rq {pcq['rq-lasso']:.3f}; "
                   f"window PCQ order ok={order_ok}; CP80 gQ {cp80:.3f} (refit every {refit} months)")
    assert full_ok and order_ok and cp_ok


def test_c11_skip_is_recorded():
    if not EQUITY:
        ACCEPTANCE[11] = ("SKIP", "external equity CSV not supplied (GQLASSO_EQUITY_CSV unset)")


# ---------------------------------------------------------------------------
# further checks that reuse the criterion 6 runs


def test_gq_in_sample_crossings_not_above_rq_under_heteroscedasticity(sim_records):
    for n in SIM_NS:
        recs = sim_records["hetero", n]
        gq = np.median(_values(recs, "gq-lasso", "pcq"))
        rq = np.median(_values(recs, "rq-lasso", "pcq"))
        assert gq <= rq


def test_gcqr_crosses_more_than_gq_at_n1000_under_heteroscedasticity(sim_records):
    recs = sim_records["hetero", 1000]
    gq = _values(recs, "gq-lasso", "ncq")
    gcqr = _values(recs, "gcqr", "ncq")
    assert np.sum(gcqr > gq) > SIM_REPS / 2, (gq.tolist(), gcqr.tolist())


# ---------------------------------------------------------------------------
# 3 and 4 run after everything else (see conftest.py)


def test_c3_objective_monotone_and_kkt():
    n = len(SOLVES)
    mono = sum(s["monotone_violations"] for s in SOLVES)
    conv = [s for s in SOLVES if s["converged"]]
    reported = [s for s in conv if not s["kkt_reported"] <= s["kkt_tol"]]
    checked = [s for s in conv if not math.isnan(s["kkt_independent"])]
    independent = [s for s in checked if not s["kkt_independent"] <= s["kkt_tol"]]
    drift = max((s["residual_drift"] for s in SOLVES), default=0.0)
    ok = n > 1000 and mono == 0 and not reported and not independent
    record(3, ok, f"{n} solves ({len(conv)} converged): {mono} monotonicity violations, "
                  f"{len(reported)}+{len(independent)} KKT failures (reported+recomputed over "
                  f"{len(checked)}), max residual drift {drift:.1e}")
    assert n > 1000
    assert mono == 0
    assert not reported
    assert not independent


def test_c4_group_sparsity():
    mixed = [s for s in GQ_SUPPORTS if len(set(s)) != 1]
    ok = len(GQ_SUPPORTS) > 100 and not mixed
    record(4, ok, f"{len(GQ_SUPPORTS)} gQ-Lasso fits, {len(mixed)} with supports differing across tau")
    assert len(GQ_SUPPORTS) > 100
    assert not mixed


def test_summary():
    print()
    for line in acceptance_lines():
        print(line)
