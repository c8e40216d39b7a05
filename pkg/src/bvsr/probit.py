"""Binary-outcome extension via rank-constrained latent Gaussian responses.

The observed 0/1 outcomes are tied to latent values that the sampler
treats as the regression response.  Rather than integrating free latent
normals, the latent vector is restricted to a fixed grid: the n equally
spaced standard-normal quantiles, rescaled to empirical variance exactly
1, with the n0 individuals labelled 0 always occupying the n0 smallest
grid slots.  The model posterior then only depends on which individual
holds which slot, and a Metropolis update just swaps the slots of two
same-label individuals (compounded uniform 2..20 times for long-range
moves; either way the proposal is symmetric).

Because the grid multiset never changes, z^t z and the z mean are
invariant, so a slot swap only moves X_gamma^t z: the quantitative
likelihood machinery is reused unchanged with an O(k) update per swap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .data import GenotypeMatrix, Phenotype, ValidationError
from .likelihood import ModelFactorization
from .model import Hyperparameters
from .raoblackwell import RbAccumulator, rb_update
from .sampler import (
    XTX_PRECOMPUTE_MAX_P,
    ChainConfig,
    PosteriorSamples,
    ProposalConfig,
    SnpRanking,
    initial_state,
    merge_samples,
    mh_step,
    rank_snps,
)

__all__ = ["LatentAssignment", "init_latent", "propose_latent_swap",
           "run_chain_binary", "run_chains_binary"]


@dataclass
class LatentAssignment:
    """Mapping of individuals onto the fixed latent grid.

    ``quantiles`` is the ascending grid (variance exactly 1, mean 0);
    ``slot_of[i]`` is the grid slot held by individual i.  Individuals
    with outcome 0 always hold slots < n0.
    """

    quantiles: np.ndarray
    slot_of: np.ndarray
    n0: int
    controls: np.ndarray
    cases: np.ndarray

    @property
    def n(self) -> int:
        return self.slot_of.shape[0]

    def z(self) -> np.ndarray:
        return self.quantiles[self.slot_of]

    def copy(self) -> "LatentAssignment":
        return LatentAssignment(self.quantiles, self.slot_of.copy(),
                                self.n0, self.controls, self.cases)


def init_latent(y) -> LatentAssignment:
    """Build the latent grid and the initial in-order slot assignment."""
    yv = np.asarray(y.values if isinstance(y, Phenotype) else y)
    if not np.isin(yv, (0.0, 1.0)).all():
        raise ValidationError("binary phenotype must contain only 0 and 1")
    n = yv.shape[0]
    controls = np.nonzero(yv == 0)[0]
    cases = np.nonzero(yv == 1)[0]
    n0 = controls.shape[0]
    if n0 == 0 or n0 == n:
        raise ValidationError("binary phenotype needs both classes present")
    grid = ndtri(np.arange(1, n + 1) / (n + 1))
    grid = grid - grid.mean()
    grid /= math.sqrt(float(grid @ grid) / n)
    slot_of = np.empty(n, dtype=np.int64)
    slot_of[controls] = np.arange(n0)
    slot_of[cases] = np.arange(n0, n)
    return LatentAssignment(quantiles=grid, slot_of=slot_of, n0=n0,
                            controls=controls, cases=cases)


def _swap_once(slot_of: np.ndarray, assign: LatentAssignment,
               rng: np.random.Generator) -> None:
    pools = [c for c in (assign.controls, assign.cases) if c.shape[0] >= 2]
    if not pools:
        raise ValidationError("no class has two individuals to swap")
    pool = pools[int(rng.integers(len(pools)))]
    m = pool.shape[0]
    i1 = int(rng.integers(m))
    i2 = int(rng.integers(m - 1))
    if i2 >= i1:
        i2 += 1
    a, b = pool[i1], pool[i2]
    slot_of[a], slot_of[b] = slot_of[b], slot_of[a]


def propose_latent_swap(assign: LatentAssignment, rng: np.random.Generator,
                        compound: bool = False,
                        cfg: ProposalConfig | None = None):
    """Swap the slots of a same-label pair; returns (assignment', 0.0).

    Compound mode applies a uniform 2..20 such swaps.  Both directions
    pick pairs identically, so the Hastings contribution is zero.
    """
    cfg = cfg or ProposalConfig()
    out = assign.copy()
    if compound:
        lo, hi = cfg.compound_range
        reps = int(rng.integers(lo, hi + 1))
    else:
        reps = 1
    for _ in range(reps):
        _swap_once(out.slot_of, assign, rng)
    return out, 0.0


def _latent_step(assign: LatentAssignment, z: np.ndarray,
                 fact: ModelFactorization, rng: np.random.Generator,
                 cfg: ProposalConfig) -> tuple[LatentAssignment, bool]:
    compound = rng.random() < cfg.small_world_prob
    prop, _ = propose_latent_swap(assign, rng, compound, cfg)
    changed = np.nonzero(prop.slot_of != assign.slot_of)[0]
    if changed.shape[0] == 0:
        rng.random()
        return assign, True
    dz = assign.quantiles[prop.slot_of[changed]] - z[changed]
    if fact.k == 0 or fact.ridge == math.inf:
        delta = 0.0
        xty2 = quad2 = None
    else:
        xty2, quad2 = fact.xty_quad_after_response_delta(changed, dz)
        y2 = fact.ssr_null()
        delta = -0.5 * fact.n * (math.log(y2 - quad2) - math.log(y2 - fact.quad))
    if math.log(rng.random()) < delta:
        z[changed] += dz
        if xty2 is not None:
            fact.commit_xty(xty2, quad2)
        return prop, True
    return assign, False


def run_chain_binary(g: GenotypeMatrix, y_binary, hp: Hyperparameters,
                     cfg: ProposalConfig, chain_cfg: ChainConfig,
                     ranking: SnpRanking | None = None,
                     rng: np.random.Generator | None = None,
                     collect_rb: bool = True) -> PosteriorSamples:
    """Sample (h, pi, gamma) and the latent assignment for a binary outcome.

    Each iteration runs one model move and ``cfg.latent_moves_per_iteration``
    latent swap moves.  The reported PVE is that of the latent response.
    """
    if not g.centered:
        raise ValueError("genotypes must be centered")
    assign = init_latent(y_binary)
    z = assign.z()  # owned, mutated in place on accepted swaps
    x = g.values
    s = g.col_variance
    if ranking is None:
        ranking = rank_snps(g, z)
    if rng is None:
        rng = np.random.default_rng(chain_cfg.seed)

    state = initial_state(ranking, hp, s, rng)
    products = None
    if g.p <= XTX_PRECOMPUTE_MAX_P:
        # X^t z must stay live because z mutates, so only X^t X is cached
        products = (x.T @ x, None)
    fact = ModelFactorization(x, z, members=state.gamma,
                              sigma_a_sq=state.sigma_a_sq, products=products)

    total = chain_cfg.burn_in + chain_cfg.sampling
    n_rec = chain_cfg.sampling // chain_cfg.thin
    rec_h = np.empty(n_rec)
    rec_pi = np.empty(n_rec)
    rec_tau = np.empty(n_rec)
    rec_pve = np.empty(n_rec)
    rec_lbf = np.empty(n_rec)
    rec_k = np.empty(n_rec, dtype=np.int64)
    gammas: list[np.ndarray] = []
    beta_idx: list[np.ndarray] = []
    beta_val: list[np.ndarray] = []
    acc = RbAccumulator.zeros(g.p)
    accepted = 0
    rec = 0
    for it in range(total):
        state, fact, ok = mh_step(state, fact, ranking, rng, cfg, hp, s)
        accepted += ok
        for _ in range(cfg.latent_moves_per_iteration):
            assign, _ = _latent_step(assign, z, fact, rng, cfg)
        pos = it - chain_cfg.burn_in + 1
        if pos >= 1 and pos % chain_cfg.thin == 0 and rec < n_rec:
            draw = fact.sample_beta_tau(rng)
            idx = np.array(sorted(fact.members), dtype=np.int64)
            rec_h[rec] = state.h
            rec_pi[rec] = state.pi
            rec_tau[rec] = draw.tau
            rec_pve[rec] = draw.pve
            rec_lbf[rec] = fact.log_bf()
            rec_k[rec] = state.k
            gammas.append(idx)
            beta_idx.append(idx)
            beta_val.append(draw.beta[idx])
            if collect_rb:
                rb_update(acc, idx, draw.beta[idx], draw.tau, state.h,
                          state.pi, x, z, s)
            rec += 1
    return PosteriorSamples(
        p=g.p, n=g.n, h=rec_h, pi=rec_pi, tau=rec_tau, pve=rec_pve,
        log_bf=rec_lbf, k=rec_k, gammas=gammas, beta_idx=beta_idx,
        beta_val=beta_val, rb=acc, seed=chain_cfg.seed,
        accept_rate=accepted / max(total, 1),
    )


def _binary_chain_job(args):
    g, y, hp, cfg, one_cfg, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    return run_chain_binary(g, y, hp, cfg, one_cfg, rng=rng)


def run_chains_binary(g: GenotypeMatrix, y_binary, hp: Hyperparameters,
                      cfg: ProposalConfig, chain_cfg: ChainConfig) -> list[PosteriorSamples]:
    """Run several independent binary-outcome chains (see run_chains)."""
    from .sampler import _worker_threads
    from concurrent.futures import ProcessPoolExecutor

    seeds = np.random.SeedSequence(chain_cfg.seed).spawn(chain_cfg.chains)
    one = ChainConfig(burn_in=chain_cfg.burn_in, sampling=chain_cfg.sampling,
                      thin=chain_cfg.thin, seed=chain_cfg.seed, chains=1)
    jobs = [(g, y_binary, hp, cfg, one, ss) for ss in seeds]
    workers = min(_worker_threads(), chain_cfg.chains)
    if workers <= 1 or chain_cfg.chains == 1:
        return [_binary_chain_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_binary_chain_job, jobs))
