import json

import numpy as np
import pytest

from gqlasso.design import DesignData, Standardizer
from gqlasso.diagnostics import ConeReport, cone_check, consistency_trend, oracle_lambda, subgradient_matrix
from gqlasso.errors import UsageError
from gqlasso.estimators import CvSettings, MethodSpec, ModelFit, fit_gq_lasso
from gqlasso.experiments import replicate_seed
from gqlasso.simulate import OracleTruth, SimScenario, generate, oracle_coefficients

FAST = CvSettings(folds=5, n_lambda=30)


def test_lambda_zero_fixtures():
    # intercept-only design: no predictor subgradient at all
    d = DesignData(np.array([1.0, -1.0, 2.0, -2.0]), np.ones((4, 1)))
    assert oracle_lambda(d, np.zeros((1, 1)), [0.5]) == 0.0
    # balanced residual signs against a centered column
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([1.0, -1.0, -1.0, 1.0])
    d = DesignData.from_predictors(y, x)
    assert oracle_lambda(d, np.zeros((2, 1)), [0.5]) == pytest.approx(0.0, abs=1e-15)


def test_lambda_brute_force(rng):
    n, p, taus = 9, 3, [0.2, 0.5, 0.7]
    d = DesignData.from_predictors(rng.normal(size=n), rng.normal(size=(n, p)))
    beta = rng.normal(size=(p + 1, 3)) * 0.3
    xs = (d.x[:, 1:] - d.x[:, 1:].mean(0)) / d.x[:, 1:].std(0)
    v = np.zeros((p, 3))
    for i in range(n):
        for j in range(p):
            for k, tau in enumerate(taus):
                eps = d.y[i] - d.x[i] @ beta[:, k]
                v[j, k] += (tau - (1.0 if eps <= 0 else 0.0)) * xs[i, j] / n
    np.testing.assert_allclose(subgradient_matrix(d, beta, taus), v, atol=1e-12)
    assert oracle_lambda(d, beta, taus) == pytest.approx(max(np.linalg.norm(v, axis=1)), abs=1e-12)
    with pytest.raises(UsageError):
        oracle_lambda(d, beta)


def test_lambda_shrinks_with_n():
    taus = (0.1, 0.3, 0.5, 0.7, 0.9)
    meds = []
    for n in (200, 1000, 5000):
        vals = []
        for r in range(20):
            sc = SimScenario(n, 20, seed=replicate_seed(11, r))
            vals.append(oracle_lambda(generate(sc), oracle_coefficients(sc, taus)))
        meds.append(np.median(vals))
    assert meds[0] > meds[1] > meds[2]


def _fit_at(data, beta, taus):
    sc = Standardizer.fit(data.x)
    return ModelFit(MethodSpec("gq-lasso", taus), beta, sc.to_standardized(beta), 0.1, sc,
                    data.column_names, True, 0.0)


def test_cone_sums_and_gating(rng):
    sc = SimScenario(100, 8, seed=1)
    d = generate(sc)
    taus = (0.25, 0.75)
    truth = oracle_coefficients(sc, taus)
    rep = cone_check(_fit_at(d, truth.beta, taus), truth, 0.1, 0.01)
    assert rep.inactive_norm_sum == 0.0 and rep.active_norm_sum == pytest.approx(0.0, abs=1e-12)
    assert rep.cone_holds and rep.condition_met
    off = truth.beta + rng.normal(size=truth.beta.shape)
    fit = _fit_at(d, off, taus)
    delta = fit.std_coefficients - fit.scaler.to_standardized(truth.beta)
    norms = np.linalg.norm(delta, axis=1)
    rep = cone_check(fit, truth, 0.1, 0.06)
    assert rep.active_norm_sum == pytest.approx(norms[:5].sum(), abs=1e-12)
    assert rep.inactive_norm_sum == pytest.approx(norms[5:].sum(), abs=1e-12)
    assert rep.cone_holds == (norms[5:].sum() <= 3.05 * norms[:5].sum())
    assert not rep.condition_met
    assert json.loads(rep.to_json())["condition_met"] is False
    bad = OracleTruth(truth.beta[:, :1], truth.support, (0.25,), "exact")
    with pytest.raises(UsageError):
        cone_check(fit, bad, 0.1, 0.01)


def test_trend_with_perfect_fitter_is_zero():
    sc = SimScenario(50, 6)
    out = consistency_trend(sc, ns=(50, 80), replicates=3,
                            fitter=lambda data, taus, cv: oracle_coefficients(
                                SimScenario(data.n, 6), taus).beta)
    assert out == {50: 0.0, 80: 0.0}
    with pytest.raises(UsageError):
        consistency_trend(SimScenario(50, 6, "hetero-asym"), ns=(50,), replicates=1)


def test_trend_error_grows_with_noise():
    def fitter(data, taus, cv):
        return fit_gq_lasso(data, taus, cv).coefficients

    kw = dict(ns=(200,), taus=(0.25, 0.5, 0.75), replicates=10, seed=3, cv=FAST, fitter=fitter)
    quiet = consistency_trend(SimScenario(200, 10), **kw)[200]
    loud = consistency_trend(SimScenario(200, 10, noise_scale=np.sqrt(2.0)), **kw)[200]
    assert loud > quiet


def test_cone_report_dataclass():
    rep = ConeReport(0.2, 0.05, 1.0, 2.0, True, True)
    assert rep.slack == 0.05
