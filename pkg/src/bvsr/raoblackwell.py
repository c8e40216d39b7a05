"""Low-variance posterior summaries via conditional inclusion probabilities.

Instead of counting how often each covariate appears across posterior
draws, each recorded draw contributes, for every covariate j, the exact
conditional probability that gamma_j = 1 given everything else in the
draw.  The conditional odds factor into three pieces: a likelihood ratio
from a univariate regression of the current residuals on covariate j, a
density ratio for the other included effects (whose common prior variance
depends on the included set through sigma_a(h, gamma)), and the prior
odds pi/(1-pi).  All excluded covariates share one residual vector, so a
full update is one matrix-vector product plus O(p) vector math; only the
included covariates need their own effect added back to the residuals.

The same pass accumulates E(beta_j | gamma_j = 1, rest) * Pr(gamma_j = 1 |
rest), whose average over draws estimates the posterior-mean effect.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass
class RbAccumulator:
    """Running sums of conditional inclusion probabilities and mean effects."""

    pip_sum: np.ndarray
    beta_sum: np.ndarray
    draw_count: int = 0

    @classmethod
    def zeros(cls, p: int) -> "RbAccumulator":
        return cls(pip_sum=np.zeros(p), beta_sum=np.zeros(p), draw_count=0)

    def pip(self) -> np.ndarray:
        if self.draw_count < 1:
            raise ValueError("no draws accumulated")
        return self.pip_sum / self.draw_count

    def beta_mean(self) -> np.ndarray:
        if self.draw_count < 1:
            raise ValueError("no draws accumulated")
        return self.beta_sum / self.draw_count


def rb_update(acc: RbAccumulator, gamma: np.ndarray, beta: np.ndarray,
              tau: float, h: float, pi: float, x: np.ndarray, y: np.ndarray,
              s: np.ndarray) -> RbAccumulator:
    """Accumulate one draw's conditional inclusion probabilities.

    ``gamma`` lists the included column indices and ``beta`` their sampled
    effects (same order).  ``x``/``y`` are the centered data and ``s`` the
    column variances; zero-variance columns are never includable and get
    probability 0.
    """
    n, p = x.shape
    k = len(gamma)
    eligible = s > 0.0
    logit_prior = math.log(pi) - math.log1p(-pi)
    if h == 0.0:
        # zero effect variance: the model term is indistinguishable from the
        # null, so the conditional odds reduce to the prior odds
        pips = np.where(eligible, expit(logit_prior), 0.0)
        acc.pip_sum += pips
        acc.draw_count += 1
        return acc
    c = h / (1.0 - h)
    if k:
        gamma = np.asarray(gamma)
        beta = np.asarray(beta, dtype=np.float64)
        resid = y - x[:, gamma] @ beta
        ssum = float(np.sum(s[gamma]))
        ssq = float(beta @ beta)
    else:
        resid = y
        ssum = 0.0
        ssq = 0.0
    xtr = x.T @ resid
    ns = n * s
    s1 = ssum + s
    inv_sig1 = s1 / c
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = 1.0 / (ns + inv_sig1)
        log_lr = 0.5 * np.log(omega * inv_sig1) + 0.5 * tau * omega * xtr ** 2
        if k:
            log_dr = 0.5 * k * np.log(s1 / ssum) - 0.5 * tau * (s / c) * ssq
        else:
            log_dr = 0.0
    logit = log_lr + log_dr + logit_prior
    with np.errstate(invalid="ignore"):
        ebeta = omega * xtr
    if k:
        # included covariates: add the own effect back into the residual
        # (x_j^t x_j = n s_j on centered columns), shrink the variance sum
        sg = s[gamma]
        xtr_inc = xtr[gamma] + ns[gamma] * beta
        s0 = ssum - sg
        inv_sig1_inc = ssum / c
        omega_inc = 1.0 / (ns[gamma] + inv_sig1_inc)
        log_lr_inc = 0.5 * np.log(omega_inc * inv_sig1_inc) \
            + 0.5 * tau * omega_inc * xtr_inc ** 2
        ssq_minus = ssq - beta ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            log_dr_inc = np.where(
                s0 > 0.0,
                0.5 * (k - 1) * np.log(ssum / s0) - 0.5 * tau * (sg / c) * ssq_minus,
                0.0,
            )
        logit[gamma] = log_lr_inc + log_dr_inc + logit_prior
        ebeta[gamma] = omega_inc * xtr_inc
    pips = expit(logit)
    np.putmask(pips, ~eligible, 0.0)
    np.putmask(ebeta, ~eligible, 0.0)
    acc.pip_sum += pips
    acc.beta_sum += pips * ebeta
    acc.draw_count += 1
    return acc


def pip_estimate(acc: RbAccumulator) -> np.ndarray:
    """Posterior inclusion probability per covariate, averaged over draws."""
    return acc.pip()


def posterior_mean_beta(acc: RbAccumulator) -> np.ndarray:
    """Posterior-mean effect size per covariate, averaged over draws."""
    return acc.beta_mean()


def predict(x_new: np.ndarray, beta_bar: np.ndarray, col_means: np.ndarray,
            y_mean: float = 0.0) -> np.ndarray | float:
    """Predict responses for new dosage rows using posterior-mean effects.

    ``x_new`` holds raw dosages (one row per individual, or a single
    p-vector); columns are centered with the training column means and the
    training response mean is added back.
    """
    x_new = np.asarray(x_new, dtype=np.float64)
    p = beta_bar.shape[0]
    if x_new.shape[-1] != p:
        raise ValueError(
            f"genotype has {x_new.shape[-1]} covariates, model has {p}")
    if col_means.shape[0] != p:
        raise ValueError(
            f"centering vector has {col_means.shape[0]} entries, model has {p}")
    out = (x_new - col_means) @ beta_bar + y_mean
    return float(out) if np.ndim(out) == 0 else out
