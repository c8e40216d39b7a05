"""Closed-form marginal likelihood under the limiting priors, with incremental updates.

All quantities live in log domain.  For an included set of size k the
marginal-likelihood ratio against the null ("Bayes factor") is

    log BF = 1/2 log|Omega| - k log sigma_a - (n/2) log(ssr_model / ssr_null)

with Omega = (sigma_a^-2 I_k + Xg^t Xg)^-1 on centered covariates,
ssr_model = y^t y - n ybar^2 - y^t Xg Omega Xg^t y and
ssr_null = y^t y - n ybar^2.  This is the flat-intercept limit: the
intercept block contributes the factor sqrt(n) * |Omega_full|^(1/2) =
|Omega|^(1/2) once columns are centered, so no explicit n^(1/2) term
appears.  The empty set gives log BF = 0 by definition, and sigma_a = 0
collapses the model onto the null (log BF = 0) as well.

A ModelFactorization caches the Gram matrix, X^t y, and the Cholesky
factor of the ridged Gram so that add/remove/swap moves cost O(n k + k^2)
and a change of sigma_a costs one k x k refactorization.  A factorization
belongs to exactly one chain; chains share only the read-only data arrays.
"""
from __future__ import annotations

import logging
import math
import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg import lapack as _lapack

from .model import EffectDraw, ModelState, pve_from_xb

logger = logging.getLogger("bvsr")

# Relative pivot tolerance below which an incremental Cholesky step is
# considered lost and the factor is rebuilt from the Gram matrix.
PIVOT_RTOL = 1e-10

_EMPTY = np.zeros((0, 0))


def _cholupdate(L: np.ndarray, x: np.ndarray) -> None:
    """Rank-one update L L^t + x x^t -> L' L'^t, in place (LINPACK dchud)."""
    m = x.shape[0]
    for i in range(m):
        lii = L[i, i]
        xi = x[i]
        r = math.hypot(lii, xi)
        c = r / lii
        s = xi / lii
        L[i, i] = r
        if i + 1 < m:
            L[i + 1:, i] = (L[i + 1:, i] + s * x[i + 1:]) / c
            x[i + 1:] = c * x[i + 1:] - s * L[i + 1:, i]


class ModelFactorization:
    """Cached linear algebra for one included set at one ridge (sigma_a^-2).

    Fields mirror what the likelihood needs: ``gram`` = Xg^t Xg, ``xty`` =
    Xg^t y, ``chol`` = lower Cholesky factor of (ridge I + gram), ``yty``,
    ``ybar``, ``logdet_omega`` and ``quad`` = y^t Xg Omega Xg^t y.
    ``members`` lists the included column indices in factor order (order of
    insertion, not sorted).
    """

    __slots__ = ("x", "y", "n", "yty", "ybar", "members", "member_set",
                 "xg", "gram", "xty", "chol", "ridge", "logdet_omega",
                 "quad", "_cap", "_xtx", "_xty_full")

    def __init__(self, x: np.ndarray, y: np.ndarray, members=(),
                 sigma_a_sq: float | None = None,
                 products: tuple[np.ndarray, np.ndarray] | None = None):
        n = y.shape[0]
        self.x = x
        self.y = y
        self.n = n
        self.yty = float(y @ y)
        self.ybar = float(y.mean())
        if self.ssr_null() <= 0.0:
            raise ValueError("constant phenotype: null residual variance is zero")
        # optional precomputed (X^t X, X^t y); worth it when many moves hit
        # the same modest-p dataset
        self._xtx, self._xty_full = products if products is not None else (None, None)
        self.members: list[int] = []
        self.member_set: set[int] = set()
        self._cap = 8
        self.xg = np.empty((n, self._cap), order="F")
        self.gram = np.empty((self._cap, self._cap))
        self.xty = np.empty(self._cap)
        self.chol = _EMPTY
        self.ridge = None if sigma_a_sq is None else _ridge_of(sigma_a_sq)
        self.logdet_omega = 0.0
        self.quad = 0.0
        for j in members:
            self.push_col(int(j))
        self.refresh_chol()

    # -- basic views ----------------------------------------------------

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def sigma_a_sq(self) -> float | None:
        if self.ridge is None:
            return None
        return math.inf if self.ridge == 0.0 else 1.0 / self.ridge

    def ssr_null(self) -> float:
        return self.yty - self.n * self.ybar ** 2

    def gram_view(self) -> np.ndarray:
        return self.gram[: self.k, : self.k]

    def xty_view(self) -> np.ndarray:
        return self.xty[: self.k]

    def xg_view(self) -> np.ndarray:
        return self.xg[:, : self.k]

    # -- data-level moves (chol deferred; call refresh_chol afterwards) --

    def _grow(self) -> None:
        cap = self._cap * 2
        xg = np.empty((self.n, cap), order="F")
        xg[:, : self.k] = self.xg_view()
        gram = np.empty((cap, cap))
        gram[: self.k, : self.k] = self.gram_view()
        xty = np.empty(cap)
        xty[: self.k] = self.xty_view()
        self.xg, self.gram, self.xty, self._cap = xg, gram, xty, cap

    def push_col(self, j: int) -> None:
        """Append covariate j to the Gram/xty caches (no Cholesky work)."""
        if j in self.member_set:
            raise ValueError(f"covariate {j} already included")
        k = self.k
        if k == self._cap:
            self._grow()
        col = self.x[:, j]
        self.xg[:, k] = col
        if self._xtx is not None:
            row = self._xtx[:, j][self.members + [j]]
        else:
            row = self.xg[:, : k + 1].T @ col
        # the response may be mutated in place (latent moves), in which case
        # no precomputed X^t y is available
        self.xty[k] = self._xty_full[j] if self._xty_full is not None else col @ self.y
        self.gram[k, : k + 1] = row
        self.gram[: k + 1, k] = row
        self.members.append(j)
        self.member_set.add(j)

    def drop_col(self, j: int) -> int:
        """Remove covariate j from the caches; returns its factor position."""
        q = self.members.index(j)
        k = self.k
        self.xg[:, q: k - 1] = self.xg[:, q + 1: k]
        self.gram[q: k - 1, :k] = self.gram[q + 1: k, :k]
        self.gram[: k - 1, q: k - 1] = self.gram[: k - 1, q + 1: k]
        self.xty[q: k - 1] = self.xty[q + 1: k]
        del self.members[q]
        self.member_set.discard(j)
        return q

    # -- Cholesky maintenance -------------------------------------------

    def refresh_chol(self) -> None:
        """Refactorize (ridge I + gram) and recompute derived scalars."""
        k = self.k
        if k == 0:
            self.chol = _EMPTY
            self.logdet_omega = 0.0
            self.quad = 0.0
            return
        if self.ridge is None:
            raise ValueError("sigma_a_sq unset for a nonempty model")
        if self.ridge == math.inf:
            # zero effect variance: the model collapses onto the null
            self.chol = np.eye(k)   # placeholder, never used for inference
            self.logdet_omega = -math.inf
            self.quad = 0.0
            return
        a = self.gram_view().copy()
        a.flat[:: k + 1] += self.ridge
        c, info = _lapack.dpotrf(a, lower=1, clean=1, overwrite_a=1)
        if info != 0:
            raise np.linalg.LinAlgError(
                f"ridged Gram matrix not positive definite (info={info})")
        self.chol = c
        self._recompute_derived()

    def _recompute_derived(self) -> None:
        d = np.diagonal(self.chol)
        self.logdet_omega = -2.0 * float(np.log(d).sum())
        w, info = _lapack.dtrtrs(self.chol, self.xty_view(), lower=1)
        self.quad = float(w @ w)

    def add(self, j: int) -> None:
        """Include covariate j, extending the Cholesky factor in place."""
        self.push_col(j)
        k = self.k
        if k == 1 or self.ridge == math.inf:
            self.refresh_chol()
            return
        a = self.gram[: k - 1, k - 1]
        alpha = self.gram[k - 1, k - 1] + self.ridge
        w, _ = _lapack.dtrtrs(self.chol, a, lower=1)
        d2 = alpha - w @ w
        if d2 <= PIVOT_RTOL * alpha:
            logger.debug("cholesky append pivot loss at k=%d; rebuilding", k)
            self.refresh_chol()
            return
        chol = np.zeros((k, k))
        chol[: k - 1, : k - 1] = self.chol
        chol[k - 1, : k - 1] = w
        chol[k - 1, k - 1] = math.sqrt(d2)
        self.chol = chol
        self._recompute_derived()

    def remove(self, j: int) -> None:
        """Exclude covariate j; the trailing Cholesky block gets a stable
        rank-one update (no subtractive downdate is needed)."""
        q = self.drop_col(j)
        k = self.k
        if k == 0 or self.ridge == math.inf:
            self.refresh_chol()
            return
        c = self.chol[q + 1:, q].copy()
        chol = np.delete(np.delete(self.chol, q, axis=0), q, axis=1)
        _cholupdate(chol[q:, q:], c)
        self.chol = chol
        self._recompute_derived()

    def swap(self, j_out: int, j_in: int) -> None:
        self.remove(j_out)
        self.add(j_in)

    def refresh_sigma(self, sigma_a_sq: float | None) -> None:
        """Re-ridge the factorization for a new effect variance."""
        ridge = None if sigma_a_sq is None else _ridge_of(sigma_a_sq)
        if ridge == self.ridge:
            return
        self.ridge = ridge
        self.refresh_chol()

    # -- response permutation support (binary-trait latent moves) ---------

    def xty_quad_after_response_delta(self, rows: np.ndarray, dz: np.ndarray):
        """xty and quad after adding dz to the response at the given rows.

        Valid only for changes that preserve y^t y and the response mean
        (slot swaps of a fixed latent grid); gram and chol are unaffected.
        """
        k = self.k
        xty2 = self.xty_view() + self.xg[rows, :k].T @ dz
        w, _ = _lapack.dtrtrs(self.chol, xty2, lower=1)
        return xty2, float(w @ w)

    def commit_xty(self, xty2: np.ndarray, quad2: float) -> None:
        self.xty[: self.k] = xty2
        self.quad = quad2

    # -- likelihood quantities -------------------------------------------

    def log_bf(self) -> float:
        """Log marginal-likelihood ratio of this model against the null."""
        k = self.k
        if k == 0 or self.ridge == math.inf:
            return 0.0
        y2 = self.ssr_null()
        ssr = y2 - self.quad
        if ssr <= 0.0:
            # saturated fit; only reachable through numerically singular data
            ssr = np.finfo(float).tiny * y2
        return 0.5 * (self.logdet_omega + k * math.log(self.ridge)) \
            - 0.5 * self.n * (math.log(ssr) - math.log(y2))

    def sample_beta_tau(self, rng: np.random.Generator) -> EffectDraw:
        """Draw (beta, tau) from their conditional posterior given this model."""
        k = self.k
        ssr = self.ssr_null() - self.quad
        tau = float(rng.gamma(shape=0.5 * self.n, scale=2.0 / ssr))
        beta = np.zeros(self.x.shape[1])
        if k == 0 or self.ridge == math.inf:
            return EffectDraw(beta=beta, tau=tau, pve=0.0)
        mean = cho_solve((self.chol, True), self.xty_view(), check_finite=False)
        z = rng.standard_normal(k)
        dev = solve_triangular(self.chol.T, z, lower=False, check_finite=False)
        bg = mean + dev / math.sqrt(tau)
        beta[self.members] = bg
        xb = self.xg_view() @ bg
        return EffectDraw(beta=beta, tau=tau, pve=pve_from_xb(xb, tau))

    # -- copying / verification ------------------------------------------

    def copy(self) -> "ModelFactorization":
        out = object.__new__(ModelFactorization)
        out.x, out.y, out.n = self.x, self.y, self.n
        out.yty, out.ybar = self.yty, self.ybar
        out._xtx, out._xty_full = self._xtx, self._xty_full
        k = self.k
        out.members = list(self.members)
        out.member_set = set(self.member_set)
        cap = max(8, k + 4)   # headroom for a few adds before regrowth
        out._cap = cap
        out.xg = np.empty((self.n, cap), order="F")
        out.xg[:, :k] = self.xg[:, :k]
        out.gram = np.empty((cap, cap))
        out.gram[:k, :k] = self.gram_view()
        out.xty = np.empty(cap)
        out.xty[:k] = self.xty_view()
        out.chol = self.chol.copy()
        out.ridge = self.ridge
        out.logdet_omega = self.logdet_omega
        out.quad = self.quad
        return out

    def rebuild(self) -> "ModelFactorization":
        """Fresh factorization of the same model, built densely from the data."""
        return ModelFactorization(self.x, self.y, members=self.members,
                                  sigma_a_sq=self.sigma_a_sq)

    def enable_products(self, xtx: np.ndarray | None,
                        xty_full: np.ndarray | None) -> None:
        self._xtx = xtx
        self._xty_full = xty_full


def _ridge_of(sigma_a_sq: float) -> float:
    if sigma_a_sq < 0.0:
        raise ValueError(f"sigma_a_sq must be nonnegative, got {sigma_a_sq}")
    return math.inf if sigma_a_sq == 0.0 else 1.0 / sigma_a_sq


def _check_consistent(state: ModelState, fact: ModelFactorization) -> None:
    if set(state.gamma) != fact.member_set:
        raise ValueError("state and factorization disagree on the included set")
    sa2 = fact.sigma_a_sq
    if state.k > 0:
        if state.sigma_a_sq is None or sa2 is None:
            raise ValueError("sigma_a_sq unset for a nonempty model")
        if not math.isclose(state.sigma_a_sq, sa2, rel_tol=1e-9, abs_tol=1e-300):
            raise ValueError("state and factorization disagree on sigma_a_sq")


def log_bf(state: ModelState, fact: ModelFactorization, n: int | None = None) -> float:
    """Log Bayes factor of ``state`` against the null, from its factorization."""
    _check_consistent(state, fact)
    if n is not None and n != fact.n:
        raise ValueError(f"n mismatch: {n} != {fact.n}")
    return fact.log_bf()


def sample_beta_tau(state: ModelState, fact: ModelFactorization,
                    rng: np.random.Generator) -> EffectDraw:
    """Conditional posterior draw of effect sizes and residual precision."""
    _check_consistent(state, fact)
    return fact.sample_beta_tau(rng)


def update_add(fact: ModelFactorization, j: int) -> ModelFactorization:
    """Factorization with covariate j added (input left untouched)."""
    out = fact.copy()
    out.add(j)
    return out


def update_remove(fact: ModelFactorization, j: int) -> ModelFactorization:
    """Factorization with covariate j removed (input left untouched)."""
    out = fact.copy()
    out.remove(j)
    return out


def update_swap(fact: ModelFactorization, j_out: int, j_in: int) -> ModelFactorization:
    """Factorization with j_out exchanged for j_in (input left untouched)."""
    out = fact.copy()
    out.swap(j_out, j_in)
    return out


def refresh_sigma(fact: ModelFactorization, sigma_a_sq: float | None) -> ModelFactorization:
    """Factorization re-ridged for a new sigma_a_sq (input left untouched)."""
    out = fact.copy()
    out.refresh_sigma(sigma_a_sq)
    return out


def single_snp_log_bf_all(x_centered: np.ndarray, y_centered: np.ndarray,
                          s: np.ndarray, sigma_a: float) -> np.ndarray:
    """Single-covariate log Bayes factors for every column at a fixed sigma_a.

    Vectorized k=1 specialization of the closed form; degenerate (zero
    variance) columns get log BF = 0.
    """
    n = y_centered.shape[0]
    yc = y_centered - y_centered.mean()
    y2 = float(yc @ yc)
    if y2 <= 0.0:
        raise ValueError("constant phenotype: null residual variance is zero")
    xty = x_centered.T @ yc
    xtx = n * s
    omega = 1.0 / (xtx + sigma_a ** -2)
    quad = omega * xty ** 2
    with np.errstate(divide="ignore"):
        out = 0.5 * np.log(omega / sigma_a ** 2) \
            - 0.5 * n * (np.log(y2 - quad) - math.log(y2))
    return np.where(s > 0.0, out, 0.0)
