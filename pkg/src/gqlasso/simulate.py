"""Synthetic data for the five error regimes, with the matching true quantile coefficients.

Model: ``y = 0.5 x1 - x2 + 1.5 x3 - 2 x4 + eps`` with ``x1 ~ Poisson(2)``,
``x2 ~ U(1, 5)`` and ``x3..xp`` jointly normal with correlation
``rho^|i-j|``.  Error regimes:

=============  ======================================================
NORMAL         N(0, 1)
T2             Student t with 2 degrees of freedom
HETERO         (zeta' x) * N(0, 1), zeta = (1, 1, 1.5, 0, ..., 0)
ASYM           chi-square(3) - 3
HETERO_ASYM    HETERO + ASYM (independent draws)
=============  ======================================================
"""
from __future__ import annotations

import enum
import functools
import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, stats

from .design import DesignData
from .errors import UsageError
from .loss import validate_taus

__all__ = [
    "ErrorKind",
    "SimScenario",
    "OracleTruth",
    "generate",
    "oracle_coefficients",
    "error_quantile",
    "t2_quantile",
    "write_dataset_csv",
]

log = logging.getLogger(__name__)

SIGNAL = (0.5, -1.0, 1.5, -2.0)
SCALE = (1.0, 1.0, 1.5)


class ErrorKind(str, enum.Enum):
    NORMAL = "normal"
    T2 = "t2"
    HETERO = "hetero"
    ASYM = "asym"
    HETERO_ASYM = "hetero-asym"

    @classmethod
    def parse(cls, value) -> "ErrorKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for e in cls:
            if e.value == key:
                return e
        raise UsageError(f"unknown error kind {value!r}; choose from {[e.value for e in cls]}")

    @property
    def exact_truth(self) -> bool:
        return self is not ErrorKind.HETERO_ASYM


@dataclass(frozen=True)
class SimScenario:
    n: int
    p: int
    error_kind: ErrorKind = ErrorKind.NORMAL
    rho: float = 0.3
    seed: int = 0
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "error_kind", ErrorKind.parse(self.error_kind))
        if self.p < 4:
            raise UsageError(f"need p >= 4 predictors, got {self.p}")
        if self.n < 2:
            raise UsageError("need n >= 2")
        if not 0 <= self.rho < 1:
            raise UsageError("rho must lie in [0, 1)")
        if not self.noise_scale > 0:
            raise UsageError("noise_scale must be positive")

    @property
    def beta_star(self) -> np.ndarray:
        b = np.zeros(self.p + 1)
        b[1:5] = SIGNAL
        return b

    @property
    def zeta(self) -> np.ndarray:
        z = np.zeros(self.p + 1)
        z[:3] = SCALE
        return z

    def with_seed(self, seed) -> "SimScenario":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class OracleTruth:
    beta: np.ndarray  # (p+1) x K
    support: frozenset
    taus: tuple
    provenance: str  # "exact" or "monte_carlo"


def _rng(seed) -> np.random.Generator:
    # counter-based stream: replicate seeds give independent, reproducible streams
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _draw(scenario: SimScenario, n: int, rng: np.random.Generator):
    p = scenario.p
    x1 = rng.poisson(2.0, n).astype(float)
    x2 = rng.uniform(1.0, 5.0, n)
    m = p - 2
    corr = linalg.toeplitz(scenario.rho ** np.arange(m))
    chol = linalg.cholesky(corr, lower=True)
    z = rng.standard_normal((n, m)) @ chol.T
    x = np.column_stack([np.ones(n), x1, x2, z])
    kind = scenario.error_kind
    if kind is ErrorKind.NORMAL:
        eps = rng.standard_normal(n)
    elif kind is ErrorKind.T2:
        eps = rng.standard_t(2.0, n)
    elif kind is ErrorKind.HETERO:
        eps = (x @ scenario.zeta) * rng.standard_normal(n)
    elif kind is ErrorKind.ASYM:
        eps = rng.chisquare(3.0, n) - 3.0
    else:
        eps = (x @ scenario.zeta) * rng.standard_normal(n) + rng.chisquare(3.0, n) - 3.0
    y = x @ scenario.beta_star + scenario.noise_scale * eps
    return x, y


def generate(scenario: SimScenario) -> DesignData:
    """Draw one dataset; identical scenarios give identical data."""
    x, y = _draw(scenario, scenario.n, _rng(scenario.seed))
    names = ("(Intercept)",) + tuple(f"x{j}" for j in range(1, scenario.p + 1))
    return DesignData(y, x, names)


def t2_quantile(tau):
    """Quantile of Student t(2): (2 tau - 1) / sqrt(2 tau (1 - tau))."""
    tau = np.asarray(tau, dtype=float)
    return (2.0 * tau - 1.0) / np.sqrt(2.0 * tau * (1.0 - tau))


def error_quantile(kind, taus) -> np.ndarray:
    """F^{-1}(tau) of the standardized error (N(0,1) for the scale regimes)."""
    kind = ErrorKind.parse(kind)
    taus = np.asarray(taus, dtype=float)
    if kind in (ErrorKind.NORMAL, ErrorKind.HETERO):
        return stats.norm.ppf(taus)
    if kind is ErrorKind.T2:
        return t2_quantile(taus)
    if kind is ErrorKind.ASYM:
        return stats.chi2.ppf(taus, 3) - 3.0
    raise UsageError("HETERO_ASYM errors have no closed-form quantile")


def oracle_coefficients(scenario: SimScenario, taus, oracle_n: int = 10**6,
                        oracle_seed: int = 0) -> OracleTruth:
    """True (or pseudo-true) quantile coefficient sheet for ``taus``.

    Location regimes shift the intercept only; HETERO shifts along ``zeta``.
    HETERO_ASYM has no linear quantile representation, so its target is the
    unpenalized quantile regression on the true columns fitted to a fresh
    sample of ``oracle_n`` draws.  The target is a population quantity, so it
    is drawn from its own stream (``oracle_seed``) rather than the replicate's
    and cached per (taus, rho, noise scale, size, seed).
    """
    taus = validate_taus(taus)
    support = frozenset(range(1, 5))
    kind = scenario.error_kind
    base = scenario.beta_star
    s = scenario.noise_scale
    if kind.exact_truth:
        q = error_quantile(kind, taus)
        direction = scenario.zeta if kind is ErrorKind.HETERO else np.eye(scenario.p + 1)[0]
        beta = base[:, None] + s * direction[:, None] * q[None, :]
        return OracleTruth(beta, support, tuple(taus.tolist()), "exact")
    core = _pseudo_truth(tuple(taus.tolist()), scenario.rho, s, int(oracle_n), int(oracle_seed))
    beta = np.zeros((scenario.p + 1, taus.size))
    beta[:5] = core
    return OracleTruth(beta, support, tuple(taus.tolist()), "monte_carlo")


@functools.lru_cache(maxsize=32)
def _pseudo_truth(taus: tuple, rho: float, noise_scale: float, n: int, seed) -> np.ndarray:
    import statsmodels.api as sm
    from statsmodels.tools.sm_exceptions import IterationLimitWarning

    # x3, x4 have the same joint law for every p >= 4, so p = 4 suffices
    sc = SimScenario(n, 4, ErrorKind.HETERO_ASYM, rho, 0, noise_scale)
    x, y = _draw(sc, n, _rng([0x5EED, int(seed)]))
    out = np.empty((5, len(taus)))
    log.info("fitting pseudo-truth on %d draws for %d quantiles", n, len(taus))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IterationLimitWarning)
        for k, tau in enumerate(taus):
            out[:, k] = sm.QuantReg(y, x).fit(q=tau, max_iter=5000, p_tol=1e-8).params
    return out


def write_dataset_csv(data: DesignData, path) -> None:
    """CSV with header ``y,x1,...,xp`` at full round-trip precision."""
    header = ["y"] + [f"x{j}" for j in range(1, data.p + 1)]
    body = np.column_stack([data.y, data.x[:, 1:]])
    np.savetxt(path, body, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
