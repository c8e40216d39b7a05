"""Independent dense reference implementations used to check the package.

Everything here deliberately avoids the package's incremental code paths:
matrices are inverted or eigendecomposed with plain numpy, marginal
likelihoods are integrated numerically with proper priors near the
improper limit, and posteriors over small problems are enumerated
exhaustively.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate


def dense_log_bf(x: np.ndarray, y: np.ndarray, members, sigma_a_sq: float) -> float:
    """Log Bayes factor via explicit inverse and slogdet (no Cholesky reuse)."""
    members = list(members)
    k = len(members)
    n = y.shape[0]
    yc = y - y.mean()
    y2 = float(yc @ yc)
    if k == 0 or sigma_a_sq == 0.0:
        return 0.0
    xg = x[:, members]
    a = xg.T @ xg + np.eye(k) / sigma_a_sq
    omega = np.linalg.inv(a)
    quad = float(yc @ xg @ omega @ xg.T @ yc)
    _, logdet = np.linalg.slogdet(omega)
    return 0.5 * logdet - 0.5 * k * math.log(sigma_a_sq) \
        - 0.5 * n * (math.log(y2 - quad) - math.log(y2))


def dense_fact_fields(x: np.ndarray, y: np.ndarray, members, sigma_a_sq: float):
    """Reference (gram, xty, chol, logdet_omega, quad) for a member list."""
    members = list(members)
    k = len(members)
    xg = x[:, members]
    gram = xg.T @ xg
    xty = xg.T @ y
    if k == 0:
        return gram, xty, np.zeros((0, 0)), 0.0, 0.0
    a = gram + np.eye(k) / sigma_a_sq
    chol = np.linalg.cholesky(a)
    _, logdet_a = np.linalg.slogdet(a)
    quad = float(xty @ np.linalg.solve(a, xty))
    return gram, xty, chol, -logdet_a, quad


def quadrature_log_bf_k1(x: np.ndarray, y: np.ndarray, sigma_a: float,
                         sigma_mu: float = 1e6, lam: float = 1e-6,
                         kap: float = 1e-6) -> float:
    """k=1 log Bayes factor by 2-D quadrature over (beta, tau), proper priors.

    The intercept is integrated analytically under its N(0, sigma_mu^2/tau)
    prior; beta and tau are integrated numerically.  With sigma_mu large and
    lam, kap small this converges to the closed-form limit.
    """
    n = y.shape[0]
    c_mu = sigma_mu ** 2 / (1.0 + n * sigma_mu ** 2)

    def log_lik(beta, tau):
        r = y - x * beta
        quad = r @ r - c_mu * r.sum() ** 2
        return 0.5 * n * math.log(tau) - 0.5 * math.log1p(n * sigma_mu ** 2) \
            - 0.5 * tau * quad

    def log_prior_tau(tau):
        # Gamma(lam/2, rate kap/2) with constants dropped (cancel in the ratio)
        return (0.5 * lam - 1.0) * math.log(tau) - 0.5 * kap * tau

    def log_prior_beta(beta, tau):
        return 0.5 * math.log(tau) - 0.5 * math.log(2 * math.pi * sigma_a ** 2) \
            - 0.5 * tau * beta ** 2 / sigma_a ** 2

    # scale the integrands around the OLS fit
    xtx = float(x @ x)
    bhat = float(x @ (y - y.mean())) / xtx
    ssr = float(np.sum((y - y.mean() - x * bhat) ** 2))
    tau_star = n / max(ssr, 1e-12)
    sd_b = 1.0 / math.sqrt(xtx * tau_star)
    lo_b, hi_b = bhat - 12 * sd_b, bhat + 12 * sd_b
    lo_u, hi_u = math.log(tau_star) - 14.0, math.log(tau_star) + 14.0

    def log_num(beta, u):
        tau = math.exp(u)
        return log_lik(beta, tau) + log_prior_beta(beta, tau) \
            + log_prior_tau(tau) + u

    def log_den(u):
        tau = math.exp(u)
        return log_lik(0.0, tau) + log_prior_tau(tau) + u

    c_num = max(log_num(b, u)
                for b in np.linspace(lo_b, hi_b, 41)
                for u in np.linspace(lo_u, hi_u, 41))
    val_num, _ = integrate.dblquad(
        lambda u, b: math.exp(log_num(b, u) - c_num),
        lo_b, hi_b, lo_u, hi_u, epsabs=1e-11, epsrel=1e-9)
    c_den = max(log_den(u) for u in np.linspace(lo_u, hi_u, 161))
    val_den, _ = integrate.quad(
        lambda u: math.exp(log_den(u) - c_den),
        lo_u, hi_u, epsabs=1e-13, epsrel=1e-11, limit=200)
    return (c_num + math.log(val_num)) - (c_den + math.log(val_den))


def enum_posterior(x: np.ndarray, y: np.ndarray, s: np.ndarray, m_cap: int,
                   n_h: int = 21, n_pi: int = 21, pve_draws: int = 0,
                   rng: np.random.Generator | None = None,
                   return_subsets: bool = False):
    """Exact posterior over all subsets on an (h, pi) grid.

    Returns (pip, pve_mean) where pve_mean is None unless pve_draws > 0; in
    that case the conditional mean of the variance-explained functional is
    estimated per (subset, h) cell with fresh Monte Carlo draws from the
    closed-form conditionals (eigendecomposition path, independent of the
    package's Cholesky code).  With return_subsets, a third element maps
    each subset (sorted tuple) to its posterior probability.
    """
    n, p = x.shape
    yc = y - y.mean()
    y2 = float(yc @ yc)
    hs = (np.arange(n_h) + 0.5) / n_h
    a, b = math.log(1.0 / p), math.log(m_cap / p)
    pis = np.exp(a + (np.arange(n_pi) + 0.5) * (b - a) / n_pi)
    log_prior_by_k = np.array([[k * math.log(pi) + (p - k) * math.log1p(-pi)
                                for pi in pis] for k in range(p + 1)])
    prior_k_tot = np.array([_logsumexp(log_prior_by_k[k]) for k in range(p + 1)])

    pip_w = np.zeros(p)
    total = 0.0
    pve_acc = 0.0
    subset_w: dict = {}
    for k in range(p + 1):
        for members in itertools.combinations(range(p), k):
            mem = list(members)
            if k == 0:
                lbf_by_h = np.zeros(n_h)
                evals = qty = None
            else:
                xg = x[:, mem]
                gram = xg.T @ xg
                evals, evecs = np.linalg.eigh(gram)
                qty = evecs.T @ (xg.T @ yc)
                ssum = float(np.sum(s[mem]))
                lbf_by_h = np.empty(n_h)
                for hi, h in enumerate(hs):
                    sa2 = (h / (1.0 - h)) / ssum
                    d = evals + 1.0 / sa2
                    quad = float(np.sum(qty ** 2 / d))
                    lbf_by_h[hi] = -0.5 * float(np.sum(np.log(d))) \
                        - 0.5 * k * math.log(sa2) \
                        - 0.5 * n * (math.log(y2 - quad) - math.log(y2))
            w_cell = math.exp(_logsumexp(lbf_by_h) - math.log(n_h)
                              + prior_k_tot[k] - math.log(n_pi))
            total += w_cell
            subset_w[members] = w_cell
            for j in mem:
                pip_w[j] += w_cell
            if pve_draws:
                for hi, h in enumerate(hs):
                    w = math.exp(lbf_by_h[hi] - math.log(n_h)
                                 + prior_k_tot[k] - math.log(n_pi))
                    if w <= 0.0:
                        continue
                    pve_acc += w * _cond_pve_mean(
                        x, yc, mem, evals, qty, h, s, y2, pve_draws, rng)
    pip = pip_w / total
    pve_mean = pve_acc / total if pve_draws else None
    if return_subsets:
        probs = {mem: w / total for mem, w in subset_w.items()}
        return pip, pve_mean, probs
    return pip, pve_mean


def _cond_pve_mean(x, yc, mem, evals, qty, h, s, y2, n_draws, rng):
    n = x.shape[0]
    k = len(mem)
    if k == 0 or h == 0.0:
        return 0.0
    sa2 = (h / (1.0 - h)) / float(np.sum(s[mem]))
    d = evals + 1.0 / sa2
    quad = float(np.sum(qty ** 2 / d))
    ssr = y2 - quad
    taus = rng.gamma(shape=0.5 * n, scale=2.0 / ssr, size=n_draws)
    xg = x[:, mem]
    gram = xg.T @ xg
    evecs = np.linalg.eigh(gram)[1]
    mean_b = evecs @ (qty / d)
    z = rng.standard_normal((n_draws, k))
    dev = (z / np.sqrt(d)) @ evecs.T
    betas = mean_b[None, :] + dev / np.sqrt(taus)[:, None]
    xb = betas @ xg.T
    v = np.einsum("ij,ij->i", xb, xb) / n * taus
    return float(np.mean(v / (1.0 + v)))


def rb_odds_dense(x: np.ndarray, y: np.ndarray, s: np.ndarray, gamma,
                  beta, tau: float, h: float, pi: float, j: int) -> float:
    """Conditional inclusion odds for covariate j, straight from the 2x2
    intercept-inclusive formulas (naive per-j recomputation)."""
    n = x.shape[0]
    gamma = list(gamma)
    beta = np.asarray(beta, dtype=np.float64)
    if j in gamma:
        pos = gamma.index(j)
        others = gamma[:pos] + gamma[pos + 1:]
        beta_others = np.delete(beta, pos)
    else:
        others = gamma
        beta_others = beta
    resid = y - x[:, others] @ beta_others if others else y.copy()
    s_with = float(np.sum(s[others])) + s[j]
    sa1_sq = (h / (1.0 - h)) / s_with
    design = np.column_stack([np.ones(n), x[:, j]])
    prec = design.T @ design + np.diag([0.0, 1.0 / sa1_sq])
    omega = np.linalg.inv(prec)
    quad_term = resid @ design @ omega @ design.T @ resid
    rbar = resid.mean()
    log_lr = 0.5 * math.log(np.linalg.det(omega)) \
        + 0.5 * math.log(n) - 0.5 * math.log(sa1_sq) \
        + 0.5 * tau * (quad_term - n * rbar ** 2)
    k_minus = len(others)
    if k_minus:
        sa0_sq = (h / (1.0 - h)) / float(np.sum(s[others]))
        log_dr = float(np.sum(
            -0.5 * math.log(sa1_sq) - 0.5 * tau * beta_others ** 2 / sa1_sq
            + 0.5 * math.log(sa0_sq) + 0.5 * tau * beta_others ** 2 / sa0_sq))
    else:
        log_dr = 0.0
    return log_lr + log_dr + math.log(pi) - math.log1p(-pi)


def rb_cond_beta_dense(x, y, s, gamma, beta, h, j) -> float:
    """Conditional posterior mean of beta_j given inclusion (dense 2x2 path)."""
    n = x.shape[0]
    gamma = list(gamma)
    beta = np.asarray(beta, dtype=np.float64)
    if j in gamma:
        pos = gamma.index(j)
        others = gamma[:pos] + gamma[pos + 1:]
        beta_others = np.delete(beta, pos)
    else:
        others = gamma
        beta_others = beta
    resid = y - x[:, others] @ beta_others if others else y.copy()
    s_with = float(np.sum(s[others])) + s[j]
    sa1_sq = (h / (1.0 - h)) / s_with
    design = np.column_stack([np.ones(n), x[:, j]])
    prec = design.T @ design + np.diag([0.0, 1.0 / sa1_sq])
    mean = np.linalg.solve(prec, design.T @ resid)
    return float(mean[1])


def _logsumexp(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    m = float(np.max(v))
    return m + math.log(float(np.sum(np.exp(v - m))))
