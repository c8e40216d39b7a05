"""Synthetic genotype/phenotype generation with exact variance-explained control.

Genotypes are independent SNPs: per-column allele frequencies uniform on a
configurable range (default [0.05, 0.5]) and dosages Binomial(2, f).
Phenotypes pick a causal set uniformly, draw effects from a normal or
double-exponential distribution, and solve the residual precision in
closed form so the realized proportion of variance explained equals the
target exactly on the generated data.  Binary outcomes assign 1 to the
individuals with the largest n/2 latent values.

Synthetic SNPs sit 1 kb apart on one chromosome so genomic-window
summaries can be exercised without real coordinates.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .data import GenotypeMatrix, Phenotype, impute_and_center
from .model import pve as compute_pve

logger = logging.getLogger("bvsr")

EFFECT_DISTRIBUTIONS = ("normal", "double-exponential")


@dataclass(frozen=True)
class SimulationSpec:
    """Recipe for one synthetic dataset."""

    p: int
    n: int
    maf_range: tuple[float, float] = (0.05, 0.5)
    n_causal: int = 30
    effect_dist: str = "normal"
    target_pve: float = 0.25
    binary: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_causal > self.p:
            raise ValueError("n_causal must not exceed p")
        if not 0.0 <= self.target_pve < 1.0:
            raise ValueError("target_pve must lie in [0, 1)")
        if self.effect_dist not in EFFECT_DISTRIBUTIONS:
            raise ValueError(f"effect_dist must be one of {EFFECT_DISTRIBUTIONS}")
        lo, hi = self.maf_range
        if not 0.0 < lo <= hi <= 0.5:
            raise ValueError("maf_range must satisfy 0 < lo <= hi <= 0.5")


@dataclass
class SimTruth:
    """Ground truth emitted alongside a simulated phenotype."""

    causal: np.ndarray
    beta: np.ndarray
    tau: float
    pve_target: float
    pve_realized: float

    def beta_dense(self, p: int) -> np.ndarray:
        out = np.zeros(p)
        out[self.causal] = self.beta
        return out


def _rng_for(spec: SimulationSpec, stream: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(stream,)))


def sim_genotypes(spec: SimulationSpec) -> GenotypeMatrix:
    """Draw an uncentered dosage matrix of independent SNPs."""
    rng = _rng_for(spec, 0)
    lo, hi = spec.maf_range
    freqs = rng.uniform(lo, hi, size=spec.p)
    values = rng.binomial(2, freqs, size=(spec.n, spec.p)).astype(np.float64)
    ids = [f"rs{j + 1}" for j in range(spec.p)]
    positions = (np.arange(spec.p, dtype=np.int64) + 1) * 1000
    return GenotypeMatrix(values=values, snp_ids=ids,
                          chromosomes=["1"] * spec.p, positions=positions)


def sim_phenotypes(g: GenotypeMatrix, spec: SimulationSpec) -> tuple[Phenotype, SimTruth]:
    """Draw a phenotype with the target variance explained, plus its truth.

    A zero target means a pure-noise phenotype: no causal SNPs, unit
    residual precision.  Binary mode thresholds the latent response at its
    median (largest n/2 values become 1).
    """
    rng = _rng_for(spec, 1)
    gc = g if g.centered else impute_and_center(g)
    n, p = gc.n, gc.p
    if spec.target_pve == 0.0:
        causal = np.empty(0, dtype=np.int64)
        beta = np.empty(0)
        tau = 1.0
        y = rng.normal(0.0, 1.0, size=n)
        realized = 0.0
    else:
        while True:
            causal = np.sort(rng.choice(p, size=spec.n_causal, replace=False))
            if spec.effect_dist == "normal":
                beta = rng.standard_normal(spec.n_causal)
            else:
                beta = rng.laplace(0.0, 1.0, size=spec.n_causal)
            xb = gc.values[:, causal] @ beta
            m2 = float(xb @ xb) / n
            if m2 > 0.0:
                break
            logger.warning("degenerate effect draw (X beta = 0); redrawing")
        tau = (spec.target_pve / (1.0 - spec.target_pve)) / m2
        y = g.values[:, causal] @ beta + rng.normal(0.0, 1.0 / np.sqrt(tau), size=n)
        realized = compute_pve(_dense(beta, causal, p), tau, gc.values)
    if spec.binary:
        order = np.argsort(y)
        yb = np.zeros(n)
        yb[order[n - n // 2:]] = 1.0
        y = yb
    pheno = Phenotype(values=y, missing_mask=np.zeros(n, dtype=bool))
    truth = SimTruth(causal=causal, beta=beta, tau=tau,
                     pve_target=spec.target_pve, pve_realized=realized)
    return pheno, truth


def _dense(beta: np.ndarray, causal: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros(p)
    out[causal] = beta
    return out


def write_truth(path_csv: str, path_json: str, truth: SimTruth,
                snp_ids: list[str]) -> None:
    with open(path_csv, "w") as fh:
        fh.write("snp_index,snp_id,beta\n")
        for j, b in zip(truth.causal, truth.beta):
            fh.write(f"{j},{snp_ids[j]},{b!r}\n")
    with open(path_json, "w") as fh:
        json.dump({"tau": truth.tau, "pve_target": truth.pve_target,
                   "pve_realized": truth.pve_realized,
                   "causal": [int(j) for j in truth.causal],
                   "beta": [float(b) for b in truth.beta]}, fh, indent=2)


def load_truth(path_json: str) -> SimTruth:
    with open(path_json) as fh:
        obj = json.load(fh)
    return SimTruth(causal=np.array(obj["causal"], dtype=np.int64),
                    beta=np.array(obj["beta"]),
                    tau=float(obj["tau"]),
                    pve_target=float(obj["pve_target"]),
                    pve_realized=float(obj["pve_realized"]))
