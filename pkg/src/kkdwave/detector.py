"""Gaussian likelihood-ratio detector for the two mixed resistor configurations.

Each hypothesis is a zero-mean bivariate Gaussian over ``(v_plus, v_minus)``.
Log-likelihoods are evaluated by whitening each observation with the inverse
Cholesky factor, so the data enter only through the power of the whitened
pair.  Under equal priors the posterior of ``C0`` is the logistic function of
the log-likelihood ratio.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import DegenerateDataError, ParameterError
from .line_model import Covariance2

LOG_2PI = math.log(2.0 * math.pi)
MIN_FIT_PAIRS = 100


class Hypothesis(enum.IntEnum):
    """``C0``: Alice holds the high resistor, Bob the low one.  ``C1``: the reverse."""

    C0 = 0
    C1 = 1


@dataclass(frozen=True)
class GaussianModel:
    covariance: Covariance2
    cholesky: np.ndarray
    log_det: float

    @classmethod
    def from_covariance(cls, covariance: Covariance2, regularization: float = 0.0) -> "GaussianModel":
        """Factor ``covariance``; raises :class:`DegenerateDataError` unless it is SPD.

        ``regularization`` adds that multiple of the mean variance to the
        diagonal before factoring.  It is off by default.
        """
        if regularization < 0:
            raise ParameterError("regularization must be non-negative")
        if regularization:
            bump = regularization * 0.5 * (covariance.c_pp + covariance.c_mm)
            covariance = Covariance2(covariance.c_pp + bump, covariance.c_mm + bump, covariance.c_pm)
        c = covariance
        if not (np.isfinite([c.c_pp, c.c_mm, c.c_pm]).all() and c.c_pp > 0 and c.c_mm > 0):
            raise DegenerateDataError(f"covariance is not positive definite: {c}")
        k11 = math.sqrt(c.c_pp)
        k21 = c.c_pm / k11
        schur = c.c_mm - k21 * k21
        # relative test: a rank-one matrix leaves only rounding noise in the Schur complement
        if not schur > 1e-12 * c.c_mm:
            raise DegenerateDataError(f"covariance is singular or indefinite: {c}")
        k22 = math.sqrt(schur)
        chol = np.array([[k11, 0.0], [k21, k22]])
        chol.setflags(write=False)
        return cls(covariance, chol, 2.0 * (math.log(k11) + math.log(k22)))

    @property
    def packed(self) -> np.ndarray:
        """``(k11, k21, k22, log_det)`` as consumed by the batch kernels."""
        k = self.cholesky
        return np.array([k[0, 0], k[1, 0], k[1, 1], self.log_det])

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Draw pairs with this covariance; the result has shape ``(*shape, 2)``."""
        z = rng.standard_normal((*shape, 2))
        return z @ self.cholesky.T


@dataclass(frozen=True)
class Observation:
    """A run of ``(v_plus, v_minus)`` pairs, one per correlation time."""

    pairs: np.ndarray

    def __post_init__(self):
        x = np.array(self.pairs, dtype=np.float64)
        if x.shape == (2,):
            x = x.reshape(1, 2)
        if x.ndim != 2 or x.shape[1] != 2 or x.shape[0] == 0:
            raise ParameterError(f"an observation is a non-empty (n, 2) array, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ParameterError("observation contains non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "pairs", x)

    def __len__(self):
        return self.pairs.shape[0]


@dataclass(frozen=True)
class Decision:
    hypothesis: Hypothesis
    llr: float
    posterior_c0: float


def _as_observation(obs) -> Observation:
    return obs if isinstance(obs, Observation) else Observation(obs)


def fit_model(observations, regularization: float = 0.0) -> GaussianModel:
    """Zero-mean Gaussian fitted to a setup-phase recording."""
    obs = _as_observation(observations)
    if len(obs) < MIN_FIT_PAIRS:
        raise ParameterError(f"need at least {MIN_FIT_PAIRS} pairs to fit, got {len(obs)}")
    return GaussianModel.from_covariance(Covariance2.empirical(obs.pairs), regularization)


def log_likelihood(model: GaussianModel, observations) -> float:
    """Sum over pairs of the bivariate zero-mean Gaussian log-density."""
    obs = _as_observation(observations)
    k = model.cholesky
    energy = kernels.whitened_energy(obs.pairs, k[0, 0], k[1, 0], k[1, 1])
    n = len(obs)
    return -0.5 * n * model.log_det - n * LOG_2PI - 0.5 * energy


def log_likelihood_ratio(model0: GaussianModel, model1: GaussianModel, observations) -> float:
    obs = _as_observation(observations)
    return log_likelihood(model0, obs) - log_likelihood(model1, obs)


def posterior(model0: GaussianModel, model1: GaussianModel, observations) -> float:
    """P(C0 | data) under equal priors."""
    return float(expit(log_likelihood_ratio(model0, model1, observations)))


def decide(model0: GaussianModel, model1: GaussianModel, observations) -> Decision:
    """Maximum-likelihood choice between the two models; an exact tie goes to C0."""
    llr = log_likelihood_ratio(model0, model1, observations)
    hyp = Hypothesis.C0 if llr >= 0 else Hypothesis.C1
    return Decision(hyp, llr, float(expit(llr)))


def diagonal_baseline(model: GaussianModel) -> GaussianModel:
    """The same marginal variances with the cross-covariance removed."""
    c = model.covariance
    return GaussianModel.from_covariance(Covariance2(c.c_pp, c.c_mm, 0.0))


def batch_llr(model0: GaussianModel, model1: GaussianModel, trials: np.ndarray) -> np.ndarray:
    """Log-likelihood ratio of each trial in a ``(n_trials, n_pairs, 2)`` array."""
    trials = np.asarray(trials, dtype=np.float64)
    if trials.ndim != 3 or trials.shape[2] != 2:
        raise ParameterError(f"trials must have shape (n_trials, n_pairs, 2), got {trials.shape}")
    return kernels.batch_llr(trials, model0.packed, model1.packed)
