"""Hierarchical model state, hyperpriors, and the variance-explained functional.

The model couples a spike-and-slab linear regression with two
hyperparameters: ``pi`` (prior inclusion probability, log-uniform between
an expectation of 1 and of M included covariates) and ``h`` (a rough prior
guide to the proportion of variance explained, uniform on [0, 1)).  The
prior standard deviation of nonzero effects is not free: given ``h`` and
the included set, sigma_a^2 = (h/(1-h)) / sum of included column
variances, so more complex models get stronger shrinkage.

The improper limits of the remaining hyperpriors (flat intercept prior,
vanishing Gamma shape/rate on the residual precision) are absorbed
analytically into the closed-form marginal likelihood; they are never
represented numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Limits folded into the closed-form likelihood rather than approximated.
ANALYTIC_LIMITS = ("intercept prior variance -> inf", "residual Gamma shape -> 0",
                   "residual Gamma rate -> 0")


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed knobs of the hierarchy: covariate count and sparsity cap.

    ``M`` caps the prior expectation of the number of included covariates;
    log(pi) is uniform on [log(1/p), log(M/p)].
    """

    p: int
    M: int = 400

    # improper limits folded into closed forms, never held as numbers
    analytic_limits = ANALYTIC_LIMITS

    def __post_init__(self):
        if not 1 <= self.M < self.p:
            raise ValueError(f"need 1 <= M < p, got M={self.M}, p={self.p}")

    @property
    def pi_log_bounds(self) -> tuple[float, float]:
        return (math.log(1.0 / self.p), math.log(self.M / self.p))

    @property
    def h_range(self) -> tuple[float, float]:
        return (0.0, 1.0)


@dataclass
class ModelState:
    """A point in the sampler's space: included set, h, pi, derived sigma_a^2.

    ``gamma`` is a sorted tuple of included column indices; ``sigma_a_sq``
    is None for the empty set (the marginal-likelihood ratio against the
    null is 1 regardless, so the value is never needed).
    """

    gamma: tuple[int, ...]
    h: float
    pi: float
    sigma_a_sq: float | None

    @property
    def k(self) -> int:
        return len(self.gamma)


@dataclass
class EffectDraw:
    """One conditional draw of effects and residual precision.

    ``beta`` is a dense p-vector that is exactly zero off the included set.
    """

    beta: np.ndarray
    tau: float
    pve: float


def sigma_a_sq(h: float, gamma, s: np.ndarray) -> float | None:
    """Prior effect variance implied by h for the included set gamma.

    Returns (h/(1-h)) / sum_{j in gamma} s_j, or None for empty gamma.
    """
    if not 0.0 <= h < 1.0:
        raise ValueError(f"h must lie in [0, 1), got {h}")
    gamma = list(gamma)
    if not gamma:
        return None
    ssum = float(np.sum(s[gamma]))
    return sigma_a_sq_from_ssum(h, ssum)


def sigma_a_sq_from_ssum(h: float, ssum: float) -> float:
    """Same as :func:`sigma_a_sq` given the precomputed variance sum."""
    if not 0.0 <= h < 1.0:
        raise ValueError(f"h must lie in [0, 1), got {h}")
    if h == 0.0:
        return 0.0
    if ssum <= 0.0:
        raise ValueError("included covariates have zero total variance")
    return (h / (1.0 - h)) / ssum


def h_from_sigma_a_sq(sa2: float, gamma, s: np.ndarray) -> float:
    """Inverse map: h = v/(1+v) with v = sigma_a^2 * sum of included variances."""
    v = sa2 * float(np.sum(s[list(gamma)]))
    return v / (1.0 + v)


def pve(beta: np.ndarray, tau: float, x_centered: np.ndarray) -> float:
    """Proportion of response variance explained by the fitted effects.

    V = (1/n) * sum_i (X beta)_i^2 * tau on centered columns; PVE = V/(1+V).
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    xb = x_centered @ beta
    return pve_from_xb(xb, tau)


def pve_from_xb(xb: np.ndarray, tau: float) -> float:
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    v = float(xb @ xb) / xb.shape[0] * tau
    return v / (1.0 + v)


def log_prior_pi(pi: float, hp: Hyperparameters) -> float:
    """Log density of the log-uniform prior on pi; -inf outside support."""
    a, b = hp.pi_log_bounds
    if pi <= 0.0 or not a <= math.log(pi) <= b:
        return -math.inf
    return -math.log(b - a) - math.log(pi)


def log_prior_gamma_given_pi(gamma, pi: float, p: int) -> float:
    """Log of the independent-Bernoulli inclusion prior: k log pi + (p-k) log(1-pi)."""
    if not 0.0 < pi < 1.0:
        raise ValueError(f"pi must lie in (0, 1), got {pi}")
    k = len(gamma)
    return k * math.log(pi) + (p - k) * math.log1p(-pi)
