"""Metropolis-Hastings sampler over (h, pi, gamma) with rank-based proposals.

One iteration proposes a joint update: a modification of the included set
(add / remove / swap, chosen with probabilities 0.45 / 0.45 / 0.10 among
the feasible moves), then pi from its Beta full conditional given the
proposed set, then a reflected uniform step on h.  Additions are drawn
rank-first: covariates are ranked once by their single-covariate Bayes
factor (at sigma_a = 1) and the rank of the added covariate among the
currently excluded ones follows the mixture 0.3 * uniform + 0.7 *
truncated geometric (untruncated mean 2000).  With probability 0.3 an
iteration instead compounds a uniform 2..20 such set-moves into one
long-range proposal, accumulating forward and reverse path densities.

Hastings bookkeeping is exact: every move's forward density and the
density of its reversal are computed from the same pool arithmetic, so
the chain targets pi(h, pi, gamma | y) exactly.
"""
from __future__ import annotations

import math
import os
from bisect import bisect_left, insort
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

from .data import GenotypeMatrix, Phenotype
from .likelihood import ModelFactorization, single_snp_log_bf_all
from .model import (
    Hyperparameters,
    ModelState,
    log_prior_pi,
    sigma_a_sq_from_ssum,
)
from .raoblackwell import RbAccumulator, rb_update

__all__ = [
    "ProposalConfig", "ChainConfig", "SnpRanking", "PosteriorSamples",
    "rank_snps", "rank_proposal_prob", "rank_proposal_logprob",
    "move_type_probs", "propose_local", "propose_small_world", "mh_step",
    "run_chain", "run_chains", "merge_samples",
]


@dataclass(frozen=True)
class ProposalConfig:
    """Proposal-kernel knobs.

    Defaults: add/remove/swap at 0.45/0.45/0.10, a 0.3 chance of
    compounding 2..20 moves, rank mixture 0.3 uniform + 0.7 geometric with
    untruncated mean 2000, and a +-0.1 reflected step on h.
    """

    move_probs: tuple[float, float, float] = (0.45, 0.45, 0.10)
    small_world_prob: float = 0.3
    compound_range: tuple[int, int] = (2, 20)
    rank_mix_uniform: float = 0.3
    rank_geometric_mean: float = 2000.0
    h_step_halfwidth: float = 0.1
    swap_locality_window: int | None = None
    latent_moves_per_iteration: int = 1   # binary traits only

    def __post_init__(self):
        if abs(sum(self.move_probs) - 1.0) > 1e-12:
            raise ValueError("move_probs must sum to 1")
        if any(not 0.0 <= q <= 1.0 for q in self.move_probs):
            raise ValueError("move_probs must lie in [0, 1]")
        if not 0.0 <= self.small_world_prob <= 1.0:
            raise ValueError("small_world_prob must lie in [0, 1]")
        if not 0.0 <= self.rank_mix_uniform <= 1.0:
            raise ValueError("rank_mix_uniform must lie in [0, 1]")
        lo, hi = self.compound_range
        if not 1 <= lo <= hi:
            raise ValueError("compound_range must satisfy 1 <= lo <= hi")
        if self.rank_geometric_mean <= 0 or self.h_step_halfwidth <= 0:
            raise ValueError("rank_geometric_mean and h_step_halfwidth must be positive")
        if self.swap_locality_window is not None and self.swap_locality_window < 1:
            raise ValueError("swap_locality_window must be a positive index distance")


@dataclass(frozen=True)
class ChainConfig:
    """Run lengths and seeding for one or more chains."""

    burn_in: int
    sampling: int
    thin: int = 1
    seed: int = 0
    chains: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.sampling < 1 or self.thin < 1 or self.chains < 1:
            raise ValueError("burn_in >= 0 and sampling, thin, chains >= 1 required")


@dataclass
class SnpRanking:
    """Covariates ordered by marginal evidence, for rank-based add proposals.

    ``order[r]`` is the SNP index holding rank r (0 = strongest single-SNP
    Bayes factor at sigma_a = 1, ties broken by ascending SNP index);
    ``rank_of`` inverts it, with -1 marking degenerate columns, which are
    never proposed.
    """

    order: np.ndarray
    rank_of: np.ndarray
    eligible_prefix: np.ndarray   # eligible-count prefix sums for window pools

    @property
    def n_eligible(self) -> int:
        return self.order.shape[0]


def rank_snps(g: GenotypeMatrix, y, sigma_a: float = 1.0) -> SnpRanking:
    """Rank eligible covariates by single-covariate log Bayes factor."""
    yv = y.values if isinstance(y, Phenotype) else np.asarray(y)
    if not g.centered:
        raise ValueError("genotypes must be centered before ranking")
    logbf = single_snp_log_bf_all(g.values, yv, g.col_variance, sigma_a)
    eligible = g.eligible_mask()
    idx = np.nonzero(eligible)[0]
    order = idx[np.lexsort((idx, -logbf[idx]))]
    rank_of = np.full(g.p, -1, dtype=np.int64)
    rank_of[order] = np.arange(order.shape[0])
    prefix = np.zeros(g.p + 1, dtype=np.int64)
    np.cumsum(eligible, out=prefix[1:])
    return SnpRanking(order=order, rank_of=rank_of, eligible_prefix=prefix)


# -- rank-mixture distribution Q_t ---------------------------------------

def _geom_q(cfg: ProposalConfig) -> float:
    # success probability giving the configured untruncated mean
    return 1.0 - 1.0 / (cfg.rank_geometric_mean + 1.0)


def rank_proposal_prob(r: int, t: int, cfg: ProposalConfig) -> float:
    """Probability that the rank-based add proposal picks pool rank r of t."""
    if not 0 <= r < t:
        raise ValueError(f"need 0 <= r < t, got r={r}, t={t}")
    q = _geom_q(cfg)
    geom = (1.0 - q) * q ** r / (1.0 - q ** t)
    return cfg.rank_mix_uniform / t + (1.0 - cfg.rank_mix_uniform) * geom


def rank_proposal_logprob(r: int, t: int, cfg: ProposalConfig) -> float:
    return math.log(rank_proposal_prob(r, t, cfg))


def _sample_rank(rng: np.random.Generator, t: int, cfg: ProposalConfig) -> int:
    if rng.random() < cfg.rank_mix_uniform:
        return int(rng.integers(t))
    q = _geom_q(cfg)
    v = rng.random()
    r = int(math.log1p(-v * (1.0 - q ** t)) / math.log(q))
    return min(r, t - 1)


# -- move selection --------------------------------------------------------

ADD, REMOVE, SWAP = 0, 1, 2

# Gram rows come from a precomputed X^t X when p is at most this (memory cap
# ~32 MB); larger problems compute inner products per move instead.
XTX_PRECOMPUTE_MAX_P = 2048


def move_type_probs(k: int, t: int, cfg: ProposalConfig,
                    swap_feasible: bool | None = None) -> tuple[float, float, float]:
    """Move-type distribution renormalized over the feasible moves.

    Infeasible moves (remove/swap on an empty set, add/swap with an empty
    pool) get probability zero and the rest are rescaled, which is the
    density implied by resampling the move type until a feasible one
    comes up.
    """
    if swap_feasible is None:
        swap_feasible = k > 0 and t > 0
    pa, pr, ps = cfg.move_probs
    wa = pa if t > 0 else 0.0
    wr = pr if k > 0 else 0.0
    ws = ps if swap_feasible else 0.0
    tot = wa + wr + ws
    if tot == 0.0:
        raise ValueError("no feasible set move: no eligible covariates")
    return wa / tot, wr / tot, ws / tot


class _GammaView:
    """Pool arithmetic for one included set against a fixed ranking.

    Mutable: compound proposals apply moves in place so the sorted member
    and rank lists are maintained incrementally instead of being rebuilt
    at every step.
    """

    __slots__ = ("members_sorted", "incl_ranks", "k", "t", "ranking", "cfg")

    def __init__(self, member_set, ranking: SnpRanking, cfg: ProposalConfig):
        self.ranking = ranking
        self.cfg = cfg
        self.members_sorted = sorted(member_set)
        self.k = len(self.members_sorted)
        self.t = ranking.n_eligible - self.k
        self.incl_ranks = sorted(int(ranking.rank_of[j]) for j in self.members_sorted)

    def add(self, j: int) -> None:
        insort(self.members_sorted, j)
        insort(self.incl_ranks, int(self.ranking.rank_of[j]))
        self.k += 1
        self.t -= 1

    def remove(self, j: int) -> None:
        del self.members_sorted[bisect_left(self.members_sorted, j)]
        rj = int(self.ranking.rank_of[j])
        del self.incl_ranks[bisect_left(self.incl_ranks, rj)]
        self.k -= 1
        self.t += 1

    def apply_move(self, move: "_GammaMove") -> None:
        if move.j_remove is not None:
            self.remove(move.j_remove)
        if move.j_add is not None:
            self.add(move.j_add)

    def pool_snp_at(self, r: int) -> int:
        """SNP index holding pool rank r among excluded eligible covariates."""
        g = r
        while True:
            g2 = r + bisect_left(self.incl_ranks, g + 1)
            if g2 == g:
                return int(self.ranking.order[g])
            g = g2

    def pool_rank_of(self, j: int) -> int:
        rj = int(self.ranking.rank_of[j])
        return rj - bisect_left(self.incl_ranks, rj)

    # window pools for swap moves -------------------------------------

    def swap_pool_size(self, i: int) -> int:
        win = self.cfg.swap_locality_window
        if win is None:
            return self.t
        p = self.ranking.rank_of.shape[0]
        lo, hi = max(0, i - win), min(p - 1, i + win)
        elig = int(self.ranking.eligible_prefix[hi + 1] - self.ranking.eligible_prefix[lo])
        incl = bisect_left(self.members_sorted, hi + 1) - bisect_left(self.members_sorted, lo)
        return elig - incl

    def swap_candidates(self) -> list[int]:
        """Members from which a swap can start (nonempty window pool)."""
        if self.cfg.swap_locality_window is None:
            return self.members_sorted if self.t > 0 else []
        return [i for i in self.members_sorted if self.swap_pool_size(i) > 0]

    def sample_swap_partner(self, i: int, rng: np.random.Generator) -> int:
        win = self.cfg.swap_locality_window
        if win is None:
            return self.pool_snp_at(int(rng.integers(self.t)))
        p = self.ranking.rank_of.shape[0]
        lo, hi = max(0, i - win), min(p - 1, i + win)
        cand = [j for j in range(lo, hi + 1)
                if self.ranking.rank_of[j] >= 0 and not self._included(j)]
        return cand[int(rng.integers(len(cand)))]

    def _included(self, j: int) -> bool:
        q = bisect_left(self.members_sorted, j)
        return q < self.k and self.members_sorted[q] == j


@dataclass
class _GammaMove:
    kind: int
    j_add: int | None = None
    j_remove: int | None = None


def _move_log_density(view: _GammaView, move: _GammaMove) -> float:
    """Log probability that one local set-move from ``view`` is ``move``."""
    swap_cand = view.swap_candidates()
    pa, pr, ps = move_type_probs(view.k, view.t, view.cfg,
                                 swap_feasible=bool(swap_cand))
    if move.kind == ADD:
        r = view.pool_rank_of(move.j_add)
        return math.log(pa) + rank_proposal_logprob(r, view.t, view.cfg)
    if move.kind == REMOVE:
        return math.log(pr) - math.log(view.k)
    pool = view.swap_pool_size(move.j_remove)
    return math.log(ps) - math.log(len(swap_cand)) - math.log(pool)


def _sample_gamma_move(view: _GammaView, rng: np.random.Generator) -> _GammaMove:
    swap_cand = view.swap_candidates()
    pa, pr, ps = move_type_probs(view.k, view.t, view.cfg,
                                 swap_feasible=bool(swap_cand))
    u = rng.random()
    if u < pa:
        r = _sample_rank(rng, view.t, view.cfg)
        return _GammaMove(ADD, j_add=view.pool_snp_at(r))
    if u < pa + pr:
        i = view.members_sorted[int(rng.integers(view.k))]
        return _GammaMove(REMOVE, j_remove=i)
    i = swap_cand[int(rng.integers(len(swap_cand)))]
    j = view.sample_swap_partner(i, rng)
    return _GammaMove(SWAP, j_add=j, j_remove=i)


def _inverse_move(move: _GammaMove) -> _GammaMove:
    if move.kind == ADD:
        return _GammaMove(REMOVE, j_remove=move.j_add)
    if move.kind == REMOVE:
        return _GammaMove(ADD, j_add=move.j_remove)
    return _GammaMove(SWAP, j_add=move.j_remove, j_remove=move.j_add)


def _propose_gamma_path(member_set: set, ranking: SnpRanking, rng, cfg,
                        n_steps: int) -> tuple[set, list[_GammaMove], float]:
    """Compound n_steps local set-moves; returns (new set, moves, log Hastings).

    The Hastings term is the log density of the reverse path (inverse moves
    in reverse order) minus the log density of the forward path, each step
    evaluated at the set it starts from.
    """
    view = _GammaView(member_set, ranking, cfg)
    moves: list[_GammaMove] = []
    log_fwd = 0.0
    log_rev = 0.0
    for _ in range(n_steps):
        move = _sample_gamma_move(view, rng)
        log_fwd += _move_log_density(view, move)
        view.apply_move(move)
        log_rev += _move_log_density(view, _inverse_move(move))
        moves.append(move)
    return set(view.members_sorted), moves, log_rev - log_fwd


# -- pi and h proposals ----------------------------------------------------

_BETALN_CACHE: dict[tuple[int, int], float] = {}


def _pi_proposal_logpdf(pi: float, k: int, p: int) -> float:
    # Beta(k, p-k+1): the full conditional of pi given the set, within the
    # prior range.  The empty set would make the first parameter zero, so
    # it proposes from Beta(1, p+1) instead; bookkeeping uses the same form.
    a = max(k, 1)
    b = p - k + 1
    if not 0.0 < pi < 1.0:
        return -math.inf
    key = (a, b)
    norm = _BETALN_CACHE.get(key)
    if norm is None:
        norm = float(betaln(a, b))
        _BETALN_CACHE[key] = norm
    return (a - 1) * math.log(pi) + (b - 1) * math.log1p(-pi) - norm


def _sample_pi_proposal(rng: np.random.Generator, k: int, p: int) -> float:
    return float(rng.beta(max(k, 1), p - k + 1))


def _reflect_unit(v: float) -> float:
    """Reflect into [0, 1) about both boundaries."""
    while v < 0.0 or v >= 1.0:
        if v < 0.0:
            v = -v
        elif v > 1.0:
            v = 2.0 - v
        else:  # v == 1.0 exactly
            v = math.nextafter(1.0, 0.0)
    return v


# -- full proposals ----------------------------------------------------------

def _finish_proposal(state: ModelState, ranking, fact, rng, cfg, hp, s,
                     new_set: set, moves: list[_GammaMove], log_hast_gamma: float):
    fact2 = fact.copy()
    for mv in moves:
        if mv.j_remove is not None:
            fact2.drop_col(mv.j_remove)
        if mv.j_add is not None:
            fact2.push_col(mv.j_add)
    k2 = len(new_set)
    pi2 = _sample_pi_proposal(rng, k2, hp.p)
    log_hast_pi = _pi_proposal_logpdf(state.pi, state.k, hp.p) \
        - _pi_proposal_logpdf(pi2, k2, hp.p)
    h2 = _reflect_unit(state.h + rng.uniform(-cfg.h_step_halfwidth,
                                             cfg.h_step_halfwidth))
    if k2 > 0:
        sa2 = sigma_a_sq_from_ssum(h2, float(np.sum(s[fact2.members])))
    else:
        sa2 = None
    fact2.refresh_sigma(sa2)
    state2 = ModelState(gamma=tuple(sorted(new_set)), h=h2, pi=pi2, sigma_a_sq=sa2)
    return state2, fact2, log_hast_gamma + log_hast_pi


def propose_local(state: ModelState, ranking: SnpRanking, fact: ModelFactorization,
                  rng: np.random.Generator, cfg: ProposalConfig,
                  hp: Hyperparameters, s: np.ndarray):
    """One local joint proposal; returns (state', fact', log Hastings ratio)."""
    new_set, moves, lh = _propose_gamma_path(fact.member_set, ranking, rng, cfg, 1)
    return _finish_proposal(state, ranking, fact, rng, cfg, hp, s,
                            new_set, moves, lh)


def propose_small_world(state: ModelState, ranking: SnpRanking,
                        fact: ModelFactorization, rng: np.random.Generator,
                        cfg: ProposalConfig, hp: Hyperparameters, s: np.ndarray):
    """Long-range proposal compounding uniform-many local set-moves."""
    lo, hi = cfg.compound_range
    m = int(rng.integers(lo, hi + 1))
    new_set, moves, lh = _propose_gamma_path(fact.member_set, ranking, rng, cfg, m)
    return _finish_proposal(state, ranking, fact, rng, cfg, hp, s,
                            new_set, moves, lh)


def _log_target(state: ModelState, fact: ModelFactorization,
                hp: Hyperparameters) -> float:
    # uniform prior on h contributes a constant
    lp_pi = log_prior_pi(state.pi, hp)
    if lp_pi == -math.inf:
        return -math.inf
    k = state.k
    return fact.log_bf() + k * math.log(state.pi) \
        + (hp.p - k) * math.log1p(-state.pi) + lp_pi


def mh_step(state: ModelState, fact: ModelFactorization, ranking: SnpRanking,
            rng: np.random.Generator, cfg: ProposalConfig,
            hp: Hyperparameters, s: np.ndarray):
    """One Metropolis-Hastings iteration; returns (state, fact, accepted)."""
    if rng.random() < cfg.small_world_prob:
        state2, fact2, lh = propose_small_world(state, ranking, fact, rng, cfg, hp, s)
    else:
        state2, fact2, lh = propose_local(state, ranking, fact, rng, cfg, hp, s)
    delta = _log_target(state2, fact2, hp) - _log_target(state, fact, hp) + lh
    u = rng.random()
    if math.log(u) < delta:
        return state2, fact2, True
    return state, fact, False


# -- chain driver ------------------------------------------------------------

@dataclass
class PosteriorSamples:
    """Thinned posterior draws plus Rao-Blackwell accumulators for one or
    more merged chains."""

    p: int
    n: int
    h: np.ndarray
    pi: np.ndarray
    tau: np.ndarray
    pve: np.ndarray
    log_bf: np.ndarray
    k: np.ndarray
    gammas: list[np.ndarray]
    beta_idx: list[np.ndarray]
    beta_val: list[np.ndarray]
    rb: RbAccumulator
    seed: int
    n_chains: int = 1
    accept_rate: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.h.shape[0]

    def pip_rb(self) -> np.ndarray:
        """Rao-Blackwellized posterior inclusion probabilities."""
        return self.rb.pip()

    def pip_frequency(self) -> np.ndarray:
        """Raw inclusion frequencies over the recorded draws."""
        out = np.zeros(self.p)
        for gam in self.gammas:
            out[gam] += 1.0
        return out / max(len(self.gammas), 1)

    def beta_rb(self) -> np.ndarray:
        """Rao-Blackwellized posterior-mean effect sizes."""
        return self.rb.beta_mean()

    def pve_quantiles(self, qs=(0.05, 0.5, 0.95)) -> np.ndarray:
        return np.quantile(self.pve, qs)


def initial_state(ranking: SnpRanking, hp: Hyperparameters, s: np.ndarray,
                  rng: np.random.Generator) -> ModelState:
    """Start from the strongest marginal associations: top-q ranked SNPs
    for uniform q in {1..min(20, M)}, h uniform, pi matched to the set size."""
    qmax = min(20, hp.M, ranking.n_eligible)
    q = int(rng.integers(1, qmax + 1))
    gamma = tuple(sorted(int(j) for j in ranking.order[:q]))
    h = float(rng.uniform(0.0, 1.0))
    a, b = hp.pi_log_bounds
    pi = min(max(q / hp.p, math.exp(a)), math.exp(b))
    sa2 = sigma_a_sq_from_ssum(h, float(np.sum(s[list(gamma)])))
    return ModelState(gamma=gamma, h=h, pi=pi, sigma_a_sq=sa2)


def run_chain(g: GenotypeMatrix, y, hp: Hyperparameters, cfg: ProposalConfig,
              chain_cfg: ChainConfig, ranking: SnpRanking | None = None,
              rng: np.random.Generator | None = None,
              collect_rb: bool = True) -> PosteriorSamples:
    """Run one chain and return thinned draws with Rao-Blackwell summaries."""
    yv = np.asarray(y.values if isinstance(y, Phenotype) else y, dtype=np.float64)
    if not g.centered:
        raise ValueError("genotypes must be centered")
    x = g.values
    s = g.col_variance
    if ranking is None:
        ranking = rank_snps(g, yv)
    if rng is None:
        rng = np.random.default_rng(chain_cfg.seed)

    state = initial_state(ranking, hp, s, rng)
    products = None
    if g.p <= XTX_PRECOMPUTE_MAX_P:
        products = (x.T @ x, x.T @ yv)
    fact = ModelFactorization(x, yv, members=state.gamma,
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
                          state.pi, x, yv, s)
            rec += 1
    return PosteriorSamples(
        p=g.p, n=g.n, h=rec_h, pi=rec_pi, tau=rec_tau, pve=rec_pve,
        log_bf=rec_lbf, k=rec_k, gammas=gammas, beta_idx=beta_idx,
        beta_val=beta_val, rb=acc, seed=chain_cfg.seed,
        accept_rate=accepted / max(total, 1),
    )


def merge_samples(parts: list[PosteriorSamples]) -> PosteriorSamples:
    """Pool draws and Rao-Blackwell accumulators across chains (in order)."""
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    rb = RbAccumulator.zeros(first.p)
    for part in parts:
        rb.pip_sum += part.rb.pip_sum
        rb.beta_sum += part.rb.beta_sum
        rb.draw_count += part.rb.draw_count
    return PosteriorSamples(
        p=first.p, n=first.n,
        h=np.concatenate([q.h for q in parts]),
        pi=np.concatenate([q.pi for q in parts]),
        tau=np.concatenate([q.tau for q in parts]),
        pve=np.concatenate([q.pve for q in parts]),
        log_bf=np.concatenate([q.log_bf for q in parts]),
        k=np.concatenate([q.k for q in parts]),
        gammas=[gam for q in parts for gam in q.gammas],
        beta_idx=[b for q in parts for b in q.beta_idx],
        beta_val=[b for q in parts for b in q.beta_val],
        rb=rb, seed=first.seed, n_chains=len(parts),
        accept_rate=float(np.mean([q.accept_rate for q in parts])),
    )


def _worker_threads() -> int:
    env = os.environ.get("BVSR_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chain_job(args):
    g, y, hp, cfg, one_cfg, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    return run_chain(g, y, hp, cfg, one_cfg, rng=rng)


def run_chains(g: GenotypeMatrix, y, hp: Hyperparameters, cfg: ProposalConfig,
               chain_cfg: ChainConfig) -> list[PosteriorSamples]:
    """Run chain_cfg.chains independent chains over shared read-only data.

    Each chain gets its own spawned RNG stream; results come back in chain
    order, so outputs are reproducible regardless of scheduling.  The
    BVSR_THREADS environment variable caps worker processes.
    """
    seeds = np.random.SeedSequence(chain_cfg.seed).spawn(chain_cfg.chains)
    one = ChainConfig(burn_in=chain_cfg.burn_in, sampling=chain_cfg.sampling,
                      thin=chain_cfg.thin, seed=chain_cfg.seed, chains=1)
    jobs = [(g, y, hp, cfg, one, ss) for ss in seeds]
    workers = min(_worker_threads(), chain_cfg.chains)
    if workers <= 1 or chain_cfg.chains == 1:
        return [_chain_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chain_job, jobs))
