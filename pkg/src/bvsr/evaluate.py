"""Single-SNP baseline and evaluation metrics: prediction error, calibration,
power curves and genomic-window summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import GenotypeMatrix, Phenotype
from .likelihood import single_snp_log_bf_all

SINGLE_SNP_SIGMAS = (0.4, 0.2, 0.1)


def _phenovalues(y) -> np.ndarray:
    return np.asarray(y.values if isinstance(y, Phenotype) else y, dtype=np.float64)


def single_snp_log_bf_averaged(g: GenotypeMatrix, y,
                               sigmas=SINGLE_SNP_SIGMAS) -> np.ndarray:
    """Log of the average single-covariate Bayes factor over a sigma_a grid.

    The average is over Bayes factors (model averaging), not over their
    logs.  Degenerate columns get -inf.
    """
    yv = _phenovalues(y)
    stack = np.stack([single_snp_log_bf_all(g.values, yv, g.col_variance, sa)
                      for sa in sigmas])
    out = logsumexp(stack, axis=0) - math.log(len(sigmas))
    out[~g.eligible_mask()] = -math.inf
    return out


def single_snp_bf(g: GenotypeMatrix, y, j: int,
                  sigmas=SINGLE_SNP_SIGMAS) -> float:
    """Log averaged single-covariate Bayes factor for one column."""
    yv = _phenovalues(y)
    if g.degenerate[j]:
        return -math.inf
    n = g.n
    yc = yv - yv.mean()
    y2 = float(yc @ yc)
    sj = g.col_variance[j]
    xty = float(g.values[:, j] @ yc)
    logs = []
    for sa in sigmas:
        omega = 1.0 / (n * sj + sa ** -2)
        quad = omega * xty ** 2
        logs.append(0.5 * math.log(omega / sa ** 2)
                    - 0.5 * n * (math.log(y2 - quad) - math.log(y2)))
    return float(logsumexp(logs) - math.log(len(sigmas)))


def mspe(beta_hat: np.ndarray, beta_true: np.ndarray, tau: float,
         s: np.ndarray, x_centered: np.ndarray | None = None) -> float:
    """Mean squared prediction error against the generating model.

    The default assumes independent covariates: sum_j s_j (bhat_j - b_j)^2
    + 1/tau.  Passing the centered design uses the empirical covariance
    instead (for correlated covariates).
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    d = np.asarray(beta_hat, dtype=np.float64) - np.asarray(beta_true, dtype=np.float64)
    if x_centered is None:
        return float(s @ d ** 2 + 1.0 / tau)
    u = x_centered @ d
    return float(u @ u / u.shape[0] + 1.0 / tau)


def rpv(beta_hat: np.ndarray, beta_true: np.ndarray, tau: float,
        s: np.ndarray, x_centered: np.ndarray | None = None) -> float:
    """Relative prediction gain: 1 = oracle, 0 = predict the mean, < 0 = overfit."""
    zero = np.zeros_like(np.asarray(beta_true, dtype=np.float64))
    mspe0 = mspe(zero, beta_true, tau, s, x_centered)
    denom = mspe0 - 1.0 / tau
    if denom <= 0.0:
        raise ValueError("truth has no signal: relative gain undefined")
    return (mspe0 - mspe(beta_hat, beta_true, tau, s, x_centered)) / denom


@dataclass
class CalibrationBin:
    lo: float
    hi: float
    count: int
    mean_pip: float
    frac_causal: float
    se2: float   # two binomial standard errors of the causal fraction


def calibration_bins(pips: np.ndarray, truth_mask: np.ndarray,
                     n_bins: int = 20) -> list[CalibrationBin]:
    """Bin inclusion probabilities and compare them with realized causal rates."""
    pips = np.asarray(pips, dtype=np.float64)
    truth = np.asarray(truth_mask, dtype=bool)
    if pips.min() < 0.0 or pips.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    width = 1.0 / n_bins
    idx = np.minimum((pips / width).astype(np.int64), n_bins - 1)
    out = []
    for b in range(n_bins):
        in_bin = idx == b
        m = int(in_bin.sum())
        if m == 0:
            out.append(CalibrationBin(b * width, (b + 1) * width, 0,
                                      math.nan, math.nan, math.nan))
            continue
        q = float(truth[in_bin].mean())
        out.append(CalibrationBin(
            lo=b * width, hi=(b + 1) * width, count=m,
            mean_pip=float(pips[in_bin].mean()), frac_causal=q,
            se2=2.0 * math.sqrt(q * (1.0 - q) / m)))
    return out


def power_curve(scores: np.ndarray, truth_mask: np.ndarray):
    """True/false positive counts when thresholding at each distinct score.

    Returns (thresholds, true_pos, false_pos), thresholds descending; a SNP
    counts as positive when its score >= threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth_mask, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    t_sorted = truth[order]
    cum_tp = np.cumsum(t_sorted)
    cum_fp = np.cumsum(~t_sorted)
    ends = np.append(np.nonzero(np.diff(s_sorted))[0], scores.shape[0] - 1)
    return s_sorted[ends], cum_tp[ends], cum_fp[ends]


def power_at_fp(true_pos: np.ndarray, false_pos: np.ndarray, fp_budget: int) -> int:
    """Largest true-positive count attainable with at most fp_budget false positives."""
    ok = false_pos <= fp_budget
    return int(true_pos[ok].max()) if ok.any() else 0


def region_max_score(scores: np.ndarray, chromosomes, positions: np.ndarray,
                     window: int = 1_000_000, overlap: int = 500_000):
    """Per-window maximum of a per-SNP score (single-SNP region statistic).

    Returns a list of (chromosome, window_start, window_end, max_score)
    over the same overlapping windows as :func:`region_summaries`.
    """
    if not 0 <= overlap < window:
        raise ValueError("need 0 <= overlap < window")
    scores = np.asarray(scores, dtype=np.float64)
    chrom_arr = np.asarray(chromosomes)
    positions = np.asarray(positions, dtype=np.int64)
    step = window - overlap
    out = []
    seen: list[str] = []
    for chrom in chrom_arr:
        if chrom not in seen:
            seen.append(chrom)
    for chrom in seen:
        mask = chrom_arr == chrom
        pos_c = positions[mask]
        sc_c = scores[mask]
        order = np.argsort(pos_c, kind="stable")
        pos_sorted = pos_c[order]
        sc_sorted = sc_c[order]
        start = 0
        max_pos = int(pos_sorted[-1])
        while start <= max_pos:
            end = start + window
            lo = int(np.searchsorted(pos_sorted, start, side="left"))
            hi = int(np.searchsorted(pos_sorted, end, side="left"))
            if hi > lo:
                out.append((str(chrom), start, end,
                            float(sc_sorted[lo:hi].max())))
            start += step
    return out


@dataclass
class RegionSummary:
    """Posterior summary of one genomic window."""

    chromosome: str
    window_start: int
    window_end: int
    n_snps: int
    e_count: float        # expected number of included SNPs (sum of PIPs)
    e_count_trunc: float  # display value, truncated at 1
    prob_1: float
    prob_2: float
    prob_gt2: float


def region_summaries(pips: np.ndarray, chromosomes, positions: np.ndarray,
                     gammas: list[np.ndarray] | None = None,
                     window: int = 1_000_000,
                     overlap: int = 500_000) -> list[RegionSummary]:
    """Summarize overlapping genomic windows (default 1 Mb, 0.5 Mb overlap).

    The expected included count per window sums the (Rao-Blackwell) PIPs of
    its member SNPs; the probabilities of holding exactly 1, exactly 2 or
    more than 2 included SNPs are frequencies over the recorded draws (zero
    when no draws are supplied).  Windows without SNPs are skipped.
    """
    if not 0 <= overlap < window:
        raise ValueError("need 0 <= overlap < window")
    pips = np.asarray(pips, dtype=np.float64)
    chrom_arr = np.asarray(chromosomes)
    positions = np.asarray(positions, dtype=np.int64)
    step = window - overlap
    draws = gammas or []
    n_draws = len(draws)
    out: list[RegionSummary] = []
    seen: list[str] = []
    for chrom in chrom_arr:
        if chrom not in seen:
            seen.append(chrom)
    for chrom in seen:
        mask = chrom_arr == chrom
        pos_c = positions[mask]
        pip_c = pips[mask]
        order = np.argsort(pos_c, kind="stable")
        pos_sorted = pos_c[order]
        pip_sorted = pip_c[order]
        draw_pos = [np.sort(positions[g[chrom_arr[g] == chrom]]) for g in draws]
        max_pos = int(pos_sorted[-1])
        start = 0
        while start <= max_pos:
            end = start + window
            lo = int(np.searchsorted(pos_sorted, start, side="left"))
            hi = int(np.searchsorted(pos_sorted, end, side="left"))
            if hi > lo:
                e = float(pip_sorted[lo:hi].sum())
                c1 = c2 = cg = 0
                for dp in draw_pos:
                    c = int(np.searchsorted(dp, end, side="left")
                            - np.searchsorted(dp, start, side="left"))
                    if c == 1:
                        c1 += 1
                    elif c == 2:
                        c2 += 1
                    elif c > 2:
                        cg += 1
                denom = max(n_draws, 1)
                out.append(RegionSummary(
                    chromosome=str(chrom), window_start=start, window_end=end,
                    n_snps=hi - lo, e_count=e, e_count_trunc=min(e, 1.0),
                    prob_1=c1 / denom, prob_2=c2 / denom, prob_gt2=cg / denom))
            start += step
    return out
