"""Runtime checks tied to the estimator's theory.

* :func:`oracle_lambda` -- sup-norm over predictors of the check-loss
  subgradient at the true coefficients, on the solver's standardized scale.
* :func:`cone_check` -- whether the estimation error lies in the cone
  ``sum_{j not in S} ||D_j|| <= 3 sum_{j in S} ||D_j||``.
* :func:`consistency_trend` -- Monte Carlo medians of ``||b_hat - b*||``
  over a grid of sample sizes.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .design import DesignData, Standardizer
from .errors import UsageError
from .estimators import CvSettings, ModelFit, fit_gq_lasso
from .loss import validate_taus
from .simulate import OracleTruth, SimScenario, generate, oracle_coefficients

__all__ = [
    "ConeReport",
    "subgradient_matrix",
    "oracle_lambda",
    "cone_check",
    "consistency_trend",
    "CONE_SLACK",
]

log = logging.getLogger(__name__)

CONE_SLACK = 0.05


@dataclass(frozen=True)
class ConeReport:
    lambda_used: float
    capital_lambda: float
    inactive_norm_sum: float
    active_norm_sum: float
    cone_holds: bool
    condition_met: bool
    slack: float = CONE_SLACK

    def to_json(self, **kwargs) -> str:
        return json.dumps(asdict(self), **kwargs)


def subgradient_matrix(data: DesignData, beta_star, taus) -> np.ndarray:
    """``v_jk = n^-1 sum_i (tau_k - 1{eps_ik <= 0}) x~_ij`` for predictors j = 1..p.

    ``x~`` are the standardized predictor columns the solver works with;
    ``eps_ik = y_i - x_i' b*_k`` uses the original-scale truth.
    """
    taus = validate_taus(taus)
    beta_star = np.asarray(beta_star, dtype=float).reshape(data.p + 1, taus.size)
    if data.p == 0:
        return np.zeros((0, taus.size))
    eps = data.y[:, None] - data.x @ beta_star
    score = taus[None, :] - (eps <= 0.0)
    xs = Standardizer.fit(data.x).transform(data.x)[:, 1:]
    return xs.T @ score / data.n


def oracle_lambda(data: DesignData, oracle: OracleTruth | np.ndarray, taus=None) -> float:
    """``max_j ||v_j||_2`` over predictors (0 when there are none)."""
    if isinstance(oracle, OracleTruth):
        taus = oracle.taus if taus is None else taus
        beta = oracle.beta
    else:
        beta = oracle
    if taus is None:
        raise UsageError("quantile levels are required")
    v = subgradient_matrix(data, beta, taus)
    return float(np.max(np.linalg.norm(v, axis=1))) if v.size else 0.0


def cone_check(fit: ModelFit, oracle: OracleTruth, lambda_used: float,
               capital_lambda: float, slack: float = CONE_SLACK) -> ConeReport:
    """Cone membership of ``D = b_hat - b*`` on the standardized scale.

    The intercept row is unpenalized and counted with the true support.
    ``cone_holds`` allows ``slack * active_norm_sum`` on the right-hand side;
    ``condition_met`` is ``lambda_used / 2 >= capital_lambda``.
    """
    beta_star = np.asarray(oracle.beta, dtype=float)
    if beta_star.shape != fit.std_coefficients.shape:
        raise UsageError("fit and truth sheets differ in shape")
    delta = fit.std_coefficients - fit.scaler.to_standardized(beta_star)
    norms = np.linalg.norm(delta, axis=1)
    active = np.zeros(norms.size, dtype=bool)
    active[0] = True
    active[sorted(oracle.support)] = True
    a_sum = float(norms[active].sum())
    i_sum = float(norms[~active].sum())
    holds = i_sum <= 3.0 * a_sum + slack * a_sum
    return ConeReport(float(lambda_used), float(capital_lambda), i_sum, a_sum, bool(holds),
                      bool(lambda_used / 2.0 >= capital_lambda), float(slack))


def _default_fitter(data, taus, cv):
    return fit_gq_lasso(data, taus, cv).coefficients


def consistency_trend(scenario: SimScenario, ns=(200, 500, 1000), taus=(0.1, 0.3, 0.5, 0.7, 0.9),
                      replicates: int = 20, seed: int = 0, cv: CvSettings | None = None,
                      fitter=None, cache: dict | None = None) -> dict:
    """Median Frobenius error ``||b_hat - b*||`` of gQ-Lasso for each n.

    ``fitter(data, taus, cv)`` may replace the estimator and must return the
    original-scale sheet.  Replicate seeds match
    :func:`gqlasso.experiments.run_replicates`, so records from a previous
    run can be reused through ``cache``.
    """
    from .experiments import replicate_seed, run_replicates

    if not scenario.error_kind.exact_truth:
        raise UsageError("the trend needs a regime with exact truth")
    taus = tuple(validate_taus(taus).tolist())
    cv = cv or CvSettings()
    out = {}
    for n in ns:
        base = SimScenario(n, scenario.p, scenario.error_kind, scenario.rho, 0, scenario.noise_scale)
        if fitter is None:
            recs = run_replicates(base, ["gq-lasso"], replicates, seed, taus, cv, cache=cache)
            errs = [r.l2_error for r in recs]
        else:
            errs = []
            for r in range(replicates):
                sc = base.with_seed(replicate_seed(seed, r))
                data = generate(sc)
                truth = oracle_coefficients(sc, taus).beta
                errs.append(float(np.linalg.norm(fitter(data, taus, cv) - truth)))
        out[int(n)] = float(np.median(errs))
        log.info("n=%d median error %.4g", n, out[int(n)])
    return out
