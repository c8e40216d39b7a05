"""Genotype/phenotype file ingestion, imputation, centering and normalization.

File formats (all ASCII, line oriented, comma or whitespace delimited):

* mean-genotype: one SNP per row, ``snp_id, allele1, allele0, d1 ... dn``
  where each dosage is a real value in [0, 2] or a missing token (``NA`` or
  ``??``).  Real-valued dosages (posterior-mean genotypes) are accepted.
* phenotype: one value per line, ``NA`` for missing.
* positions: ``snp_id chromosome position`` per line.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

MISSING_TOKENS = {"NA", "??"}

_SPLIT = re.compile(r"[,\s]+")


class ParseError(ValueError):
    """Malformed input file (wrong field count, unreadable token)."""


class ValidationError(ValueError):
    """Well-formed input with out-of-contract values (e.g. dosage outside [0,2])."""


@dataclass
class GenotypeMatrix:
    """n x p dosage matrix with per-SNP metadata and centering state.

    ``values`` holds allele dosages; missing entries are NaN until
    :func:`impute_and_center` runs.  After centering, ``col_variance`` holds
    s_j = (1/n) sum_i x_ij^2 per column and ``col_means`` the pre-centering
    column means (needed to center future genotypes for prediction).
    Columns with zero variance are flagged ``degenerate`` and must be kept
    out of model-inclusion proposals; they stay in the matrix so column
    indices keep matching the input file.

    Instances are treated as immutable once centered and are safe to share
    read-only across chains.
    """

    values: np.ndarray
    snp_ids: list[str]
    chromosomes: list[str]
    positions: np.ndarray
    centered: bool = False
    col_means: np.ndarray | None = None
    col_variance: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def eligible_mask(self) -> np.ndarray:
        if self.degenerate is None:
            raise ValueError("genotypes must be centered before use")
        return ~self.degenerate

    def subset_rows(self, keep: np.ndarray) -> "GenotypeMatrix":
        """Return a copy restricted to the given individuals (uncentered state)."""
        if self.centered:
            raise ValueError("subset rows before centering, not after")
        return replace(self, values=self.values[keep])


@dataclass
class Phenotype:
    """Response vector with missing-data mask and normalization state."""

    values: np.ndarray
    missing_mask: np.ndarray
    normalized: bool = False
    centered: bool = False
    mean: float = 0.0

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _parse_dosage(token: str, row: int, path: str) -> float:
    if token.upper() in MISSING_TOKENS:
        return np.nan
    try:
        v = float(token)
    except ValueError as e:
        raise ParseError(f"{path}: row {row}: unreadable dosage {token!r}") from e
    if not (0.0 <= v <= 2.0):
        raise ValidationError(f"{path}: row {row}: dosage {v} outside [0, 2]")
    return v


def load_genotypes(path: str, format: str = "mean-genotype") -> GenotypeMatrix:
    """Read a mean-genotype file into an uncentered GenotypeMatrix.

    Missing dosages become NaN.  The number of individuals is fixed by the
    first row; later rows with a different dosage count raise ParseError
    naming the offending row (1-based).
    """
    if format != "mean-genotype":
        raise ValueError(f"unsupported genotype format: {format}")
    ids: list[str] = []
    cols: list[np.ndarray] = []
    n = None
    with open(path) as fh:
        for row, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = _SPLIT.split(line)
            if len(tokens) < 4:
                raise ParseError(f"{path}: row {row}: expected snp_id, 2 alleles and dosages")
            snp_id = tokens[0]
            dosages = tokens[3:]
            if n is None:
                n = len(dosages)
            elif len(dosages) != n:
                raise ParseError(
                    f"{path}: row {row}: expected {n} dosages, found {len(dosages)}"
                )
            col = np.array([_parse_dosage(t, row, path) for t in dosages])
            ids.append(snp_id)
            cols.append(col)
    if not cols:
        raise ParseError(f"{path}: no genotype rows")
    values = np.column_stack(cols)
    p = len(ids)
    return GenotypeMatrix(
        values=values,
        snp_ids=ids,
        chromosomes=["1"] * p,
        positions=np.zeros(p, dtype=np.int64),
    )


def attach_positions(g: GenotypeMatrix, path: str) -> GenotypeMatrix:
    """Fill chromosome/position metadata from a ``snp_id chrom pos`` file."""
    table: dict[str, tuple[str, int]] = {}
    with open(path) as fh:
        for row, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = _SPLIT.split(line)
            if len(tokens) != 3:
                raise ParseError(f"{path}: row {row}: expected snp_id chrom position")
            try:
                table[tokens[0]] = (tokens[1], int(tokens[2]))
            except ValueError as e:
                raise ParseError(f"{path}: row {row}: bad position {tokens[2]!r}") from e
    chroms = list(g.chromosomes)
    pos = g.positions.copy()
    for j, snp in enumerate(g.snp_ids):
        if snp in table:
            chroms[j], pos[j] = table[snp]
    return replace(g, chromosomes=chroms, positions=pos)


def load_phenotypes(path: str, binary: bool = False) -> Phenotype:
    """Read one phenotype value per line; ``NA`` marks missing."""
    vals: list[float] = []
    miss: list[bool] = []
    with open(path) as fh:
        for row, line in enumerate(fh, start=1):
            tok = line.strip()
            if not tok:
                continue
            if tok.upper() in MISSING_TOKENS:
                vals.append(np.nan)
                miss.append(True)
                continue
            try:
                v = float(tok)
            except ValueError as e:
                raise ParseError(f"{path}: row {row}: unreadable value {tok!r}") from e
            if binary and v not in (0.0, 1.0):
                raise ValidationError(f"{path}: row {row}: binary phenotype must be 0 or 1")
            vals.append(v)
            miss.append(False)
    return Phenotype(values=np.array(vals), missing_mask=np.array(miss, dtype=bool))


def drop_missing(g: GenotypeMatrix, y: Phenotype) -> tuple[GenotypeMatrix, Phenotype]:
    """Remove individuals with missing phenotype, keeping genotype rows aligned."""
    if g.n != y.n:
        raise ValidationError(f"genotype rows ({g.n}) != phenotype length ({y.n})")
    keep = ~y.missing_mask
    if keep.all():
        return g, y
    y2 = Phenotype(values=y.values[keep], missing_mask=np.zeros(keep.sum(), dtype=bool),
                   normalized=y.normalized, centered=y.centered, mean=y.mean)
    return g.subset_rows(keep), y2


def impute_and_center(g: GenotypeMatrix) -> GenotypeMatrix:
    """Column-mean impute missing dosages, then mean-center every column.

    Columns are NOT rescaled to unit variance: dosages share a common scale
    already, and rescaling would encode an effect-size assumption about
    low-frequency variants.  Zero-variance columns are centered to all-zero
    and flagged degenerate.
    """
    if g.centered:
        return g
    values = np.array(g.values, dtype=np.float64, order="F")
    n = values.shape[0]
    obs = ~np.isnan(values)
    n_obs = obs.sum(axis=0)
    if (n_obs == 0).any():
        bad = int(np.argmin(n_obs))
        raise ValidationError(f"column {bad} ({g.snp_ids[bad]}) is entirely missing")
    col_sums = np.nansum(values, axis=0)
    means = col_sums / n_obs
    nan_r, nan_c = np.nonzero(~obs)
    values[nan_r, nan_c] = means[nan_c]
    # means recomputed post-imputation equal the observed-entry means exactly
    values -= means
    s = np.einsum("ij,ij->j", values, values) / n
    degenerate = s == 0.0
    values[:, degenerate] = 0.0
    return GenotypeMatrix(
        values=values,
        snp_ids=g.snp_ids,
        chromosomes=g.chromosomes,
        positions=g.positions,
        centered=True,
        col_means=means,
        col_variance=s,
        degenerate=degenerate,
    )


def center_phenotype(y: Phenotype) -> Phenotype:
    """Mean-center the response, recording the mean for prediction back-transforms."""
    if y.missing_mask.any():
        raise ValidationError("drop missing phenotypes before centering")
    if y.centered:
        return y
    m = float(y.values.mean())
    return Phenotype(values=y.values - m, missing_mask=y.missing_mask,
                     normalized=y.normalized, centered=True, mean=m)


def quantile_normalize(y: Phenotype) -> Phenotype:
    """Map the response onto standard-normal quantiles, preserving rank order.

    Each value becomes ndtri(r_i / (n+1)) with r_i its rank; ties get
    averaged ranks.  The output is invariant to monotone-increasing affine
    transforms of the input.
    """
    if y.missing_mask.any():
        raise ValidationError("drop missing phenotypes before normalization")
    n = y.n
    if n < 2:
        raise ValidationError("need at least 2 phenotype values to normalize")
    ranks = rankdata(y.values, method="average")
    vals = ndtri(ranks / (n + 1))
    return Phenotype(values=vals, missing_mask=y.missing_mask,
                     normalized=True, centered=False, mean=0.0)


def write_genotypes(path: str, g: GenotypeMatrix, fmt: str = "%.6g") -> None:
    """Write an (uncentered) dosage matrix in mean-genotype format."""
    values = g.values
    with open(path, "w") as fh:
        for j, snp in enumerate(g.snp_ids):
            col = values[:, j]
            toks = ["NA" if np.isnan(v) else fmt % v for v in col]
            fh.write(f"{snp}, A, G, " + ", ".join(toks) + "\n")


def write_phenotypes(path: str, y: Phenotype, fmt: str = "%.10g") -> None:
    with open(path, "w") as fh:
        for v, m in zip(y.values, y.missing_mask):
            fh.write("NA\n" if m else (fmt % v) + "\n")


def write_positions(path: str, g: GenotypeMatrix) -> None:
    with open(path, "w") as fh:
        for snp, chrom, pos in zip(g.snp_ids, g.chromosomes, g.positions):
            fh.write(f"{snp} {chrom} {pos}\n")
