"""Command-line front end: simulate, run, run-binary, evaluate, predict, regions.

Every run writes a manifest (resolved configuration, seed, package and
library versions) next to its outputs, so results can be reproduced by
re-running with the recorded arguments.  Chains are dispatched
concurrently (cap with the BVSR_THREADS environment variable); file
writes happen in the parent process only.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .data import (
    GenotypeMatrix,
    Phenotype,
    attach_positions,
    center_phenotype,
    drop_missing,
    impute_and_center,
    load_genotypes,
    load_phenotypes,
    quantile_normalize,
    write_genotypes,
    write_phenotypes,
    write_positions,
)
from .evaluate import (
    calibration_bins,
    mspe,
    power_curve,
    region_summaries,
    rpv,
    single_snp_log_bf_averaged,
)
from .model import Hyperparameters
from .probit import run_chains_binary
from .raoblackwell import predict as rb_predict
from .sampler import ChainConfig, PosteriorSamples, ProposalConfig, merge_samples, run_chains
from .simulate import SimulationSpec, sim_genotypes, sim_phenotypes, write_truth

LOG10 = math.log(10.0)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))  # shortest round-trip form, plain for numpy scalars
    return str(x)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _versions() -> dict:
    import scipy
    return {"bvsr": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3]))}


def _write_manifest(out_dir: str, subcommand: str, args: argparse.Namespace,
                    extra: dict) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {"subcommand": subcommand, "config": config,
           "versions": _versions(), **extra}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, default=str)


# -- shared option plumbing ---------------------------------------------------

def _add_run_options(sub: argparse.ArgumentParser, binary: bool) -> None:
    sub.add_argument("--geno", required=True, help="mean-genotype file")
    sub.add_argument("--pheno", required=True, help="phenotype file"
                     + (" (0/1 per line)" if binary else " (one value per line)"))
    sub.add_argument("--pos", help="snp_id chromosome position file")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--burnin", type=int, default=None,
                     help="burn-in iterations (default: 10%% of --iterations, "
                          "or sampling/9 when only --sampling is given)")
    sub.add_argument("--sampling", type=int, default=None,
                     help="post-burn-in iterations (default 100000)")
    sub.add_argument("--iterations", type=int, default=None,
                     help="total iterations; burn-in defaults to 10%% of this")
    sub.add_argument("--thin", type=int, default=None,
                     help="record every thin-th draw (default targets ~10000 draws)")
    sub.add_argument("--chains", type=int, default=4)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--smax", type=int, default=None,
                     help="cap M on the prior expected model size "
                          "(default min(400, p-1))")
    if not binary:
        sub.add_argument("--qnorm", action="store_true",
                         help="quantile-normalize the phenotype before analysis")
    sub.add_argument("--swap-window", type=int, default=None,
                     help="restrict swap partners to this SNP-index distance")
    sub.add_argument("--move-probs", default="0.45,0.45,0.10",
                     help="add,remove,swap selection probabilities")
    sub.add_argument("--small-world-prob", type=float, default=0.3)
    sub.add_argument("--compound-range", default="2,20",
                     help="min,max compounded moves in a small-world proposal")
    sub.add_argument("--rank-mix-uniform", type=float, default=0.3)
    sub.add_argument("--rank-geom-mean", type=float, default=2000.0)
    sub.add_argument("--h-step", type=float, default=0.1)
    sub.add_argument("--window", type=int, default=1_000_000,
                     help="region summary window size in bp")
    sub.add_argument("--overlap", type=int, default=500_000,
                     help="region summary window overlap in bp")
    if binary:
        sub.add_argument("--latent-moves", type=int, default=1,
                         help="latent swap updates per model update")


def _resolve_lengths(parser: argparse.ArgumentParser, args) -> tuple[int, int, int]:
    if args.iterations is not None and args.sampling is not None:
        parser.error("give either --iterations or --sampling, not both")
    if args.iterations is not None:
        burnin = args.burnin if args.burnin is not None else args.iterations // 10
        if burnin >= args.iterations:
            parser.error(f"burn-in ({burnin}) must be smaller than total "
                         f"iterations ({args.iterations})")
        sampling = args.iterations - burnin
    else:
        sampling = args.sampling if args.sampling is not None else 100_000
        burnin = args.burnin if args.burnin is not None else sampling // 9
    if sampling < 1:
        parser.error(f"sampling iterations must be positive, got {sampling}")
    if burnin < 0:
        parser.error(f"burn-in must be nonnegative, got {burnin}")
    thin = args.thin if args.thin is not None else max(1, sampling // 10_000)
    if thin < 1:
        parser.error(f"thin must be positive, got {thin}")
    if args.chains < 1:
        parser.error(f"chains must be positive, got {args.chains}")
    return burnin, sampling, thin


def _proposal_config(args, binary: bool) -> ProposalConfig:
    probs = tuple(float(t) for t in args.move_probs.split(","))
    lo, hi = (int(t) for t in args.compound_range.split(","))
    return ProposalConfig(
        move_probs=probs,
        small_world_prob=args.small_world_prob,
        compound_range=(lo, hi),
        rank_mix_uniform=args.rank_mix_uniform,
        rank_geometric_mean=args.rank_geom_mean,
        h_step_halfwidth=args.h_step,
        swap_locality_window=args.swap_window,
        latent_moves_per_iteration=args.latent_moves if binary else 1,
    )


def _load_dataset(args, binary: bool):
    g = load_genotypes(args.geno)
    if args.pos:
        g = attach_positions(g, args.pos)
    else:
        # synthetic default: 1 kb spacing keeps region summaries usable
        g = GenotypeMatrix(values=g.values, snp_ids=g.snp_ids,
                           chromosomes=g.chromosomes,
                           positions=(np.arange(g.p, dtype=np.int64) + 1) * 1000)
    y = load_phenotypes(args.pheno, binary=binary)
    g, y = drop_missing(g, y)
    g = impute_and_center(g)
    if binary:
        return g, y
    if getattr(args, "qnorm", False):
        y = quantile_normalize(y)
    y = center_phenotype(y)
    return g, y


# -- output writers -----------------------------------------------------------

def _write_run_outputs(out_dir: str, g: GenotypeMatrix, y_for_bf,
                       chains: list[PosteriorSamples], window: int,
                       overlap: int) -> dict:
    merged = merge_samples(chains)
    pips = merged.pip_rb()
    beta_bar = merged.beta_rb()
    log10bf = single_snp_log_bf_averaged(g, y_for_bf) / LOG10

    _write_csv(os.path.join(out_dir, "snps.csv"),
               ["snp_id", "chromosome", "position", "col_mean", "pip",
                "beta_bar", "single_snp_log10bf"],
               ((g.snp_ids[j], g.chromosomes[j], int(g.positions[j]),
                 float(g.col_means[j]), float(pips[j]), float(beta_bar[j]),
                 float(log10bf[j])) for j in range(g.p)))

    rows = []
    for c, part in enumerate(chains):
        for d in range(part.n_draws):
            rows.append((c, d, part.h[d], part.pi[d], int(part.k[d]),
                         part.pve[d], part.log_bf[d]))
    _write_csv(os.path.join(out_dir, "trace.csv"),
               ["chain", "draw", "h", "pi", "k", "pve", "log_bf"], rows)

    chain_pips = np.column_stack([part.pip_rb() for part in chains])
    _write_csv(os.path.join(out_dir, "chain_pips.csv"),
               ["snp_id"] + [f"pip_chain{c}" for c in range(len(chains))],
               ((g.snp_ids[j], *chain_pips[j]) for j in range(g.p)))
    max_dis = 0.0
    for a in range(len(chains)):
        for b in range(a + 1, len(chains)):
            max_dis = max(max_dis, float(np.max(np.abs(chain_pips[:, a]
                                                       - chain_pips[:, b]))))

    regions = region_summaries(pips, g.chromosomes, g.positions,
                               gammas=merged.gammas, window=window,
                               overlap=overlap)
    _write_regions_csv(os.path.join(out_dir, "regions.csv"), regions)

    gamma_flat = (np.concatenate(merged.gammas) if merged.gammas
                  else np.empty(0, dtype=np.int64))
    offsets = np.cumsum([0] + [len(gam) for gam in merged.gammas])
    chain_id = np.concatenate([np.full(part.n_draws, c, dtype=np.int64)
                               for c, part in enumerate(chains)])
    np.savez_compressed(
        os.path.join(out_dir, "draws.npz"),
        h=merged.h, pi=merged.pi, tau=merged.tau, pve=merged.pve,
        log_bf=merged.log_bf, k=merged.k, gamma_flat=gamma_flat,
        gamma_offsets=offsets, chain=chain_id,
        pip_sum=merged.rb.pip_sum, beta_sum=merged.rb.beta_sum,
        draw_count=np.array([merged.rb.draw_count]))

    q05, q50, q95 = merged.pve_quantiles()
    return {
        "n": g.n, "p": g.p,
        "pve_mean": float(merged.pve.mean()),
        "pve_ci90": [float(q05), float(q95)],
        "pve_median": float(q50),
        "accept_rate": merged.accept_rate,
        "max_pairwise_pip_disagreement": max_dis,
    }


def _write_regions_csv(path: str, regions) -> None:
    _write_csv(path,
               ["chromosome", "window_start", "window_end", "n_snps",
                "e_count", "e_count_trunc", "prob_1", "prob_2", "prob_gt2"],
               ((r.chromosome, r.window_start, r.window_end, r.n_snps,
                 r.e_count, r.e_count_trunc, r.prob_1, r.prob_2, r.prob_gt2)
                for r in regions))


def _load_run_dir(run_dir: str):
    snps = []
    with open(os.path.join(run_dir, "snps.csv")) as fh:
        for row in csv.DictReader(fh):
            snps.append(row)
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    npz = np.load(os.path.join(run_dir, "draws.npz"))
    offsets = npz["gamma_offsets"]
    flat = npz["gamma_flat"]
    gammas = [flat[offsets[i]:offsets[i + 1]] for i in range(len(offsets) - 1)]
    return snps, manifest, npz, gammas


# -- subcommands --------------------------------------------------------------

def _cmd_simulate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    spec = SimulationSpec(p=args.p, n=args.n, maf_range=(args.maf_lo, args.maf_hi),
                          n_causal=args.n_causal, effect_dist=args.effect_dist,
                          target_pve=args.pve, binary=args.binary, seed=args.seed)
    g = sim_genotypes(spec)
    y, truth = sim_phenotypes(g, spec)
    write_genotypes(os.path.join(args.out, "geno.txt"), g)
    write_phenotypes(os.path.join(args.out, "pheno.txt"), y)
    write_positions(os.path.join(args.out, "pos.txt"), g)
    write_truth(os.path.join(args.out, "truth.csv"),
                os.path.join(args.out, "truth.json"), truth, g.snp_ids)
    _write_manifest(args.out, "simulate", args,
                    {"pve_realized": truth.pve_realized})
    return 0


def _run_common(parser, args, binary: bool) -> int:
    burnin, sampling, thin = _resolve_lengths(parser, args)
    cfg = _proposal_config(args, binary)
    os.makedirs(args.out, exist_ok=True)
    g, y = _load_dataset(args, binary)
    m = args.smax if args.smax is not None else min(400, g.p - 1)
    hp = Hyperparameters(p=g.p, M=m)
    chain_cfg = ChainConfig(burn_in=burnin, sampling=sampling, thin=thin,
                            seed=args.seed, chains=args.chains)
    if binary:
        chains = run_chains_binary(g, y, hp, cfg, chain_cfg)
        from .probit import init_latent
        y_for_bf = init_latent(y).z()
    else:
        chains = run_chains(g, y, hp, cfg, chain_cfg)
        y_for_bf = y
    stats = _write_run_outputs(args.out, g, y_for_bf, chains,
                               args.window, args.overlap)
    stats["y_mean"] = 0.0 if binary else y.mean
    stats["M"] = m
    stats["burn_in"] = burnin
    stats["sampling"] = sampling
    stats["thin"] = thin
    _write_manifest(args.out, "run-binary" if binary else "run", args, stats)
    print(f"run complete: {stats['n']} individuals, {stats['p']} SNPs, "
          f"{args.chains} chains; posterior mean PVE {stats['pve_mean']:.4f} "
          f"(90% CI {stats['pve_ci90'][0]:.4f}-{stats['pve_ci90'][1]:.4f})")
    return 0


def _cmd_evaluate(args) -> int:
    from .simulate import load_truth
    os.makedirs(args.out, exist_ok=True)
    snps, manifest, npz, gammas = _load_run_dir(args.run_dir)
    truth = load_truth(args.truth)
    pips = np.array([float(r["pip"]) for r in snps])
    beta_bar = np.array([float(r["beta_bar"]) for r in snps])
    log10bf = np.array([float(r["single_snp_log10bf"]) for r in snps])
    p = len(snps)
    g = impute_and_center(load_genotypes(args.geno))
    if g.p != p:
        raise ValueError(f"genotype file has {g.p} SNPs, run summary has {p}")
    truth_mask = np.zeros(p, dtype=bool)
    truth_mask[truth.causal] = True
    beta_true = truth.beta_dense(p)

    bins = calibration_bins(pips, truth_mask)
    _write_csv(os.path.join(args.out, "calibration.csv"),
               ["lo", "hi", "count", "mean_pip", "frac_causal", "se2"],
               ((b.lo, b.hi, b.count, b.mean_pip, b.frac_causal, b.se2)
                for b in bins))
    for name, scores in (("power_pip.csv", pips),
                         ("power_single_snp.csv", log10bf)):
        thr, tp, fp = power_curve(scores, truth_mask)
        _write_csv(os.path.join(args.out, name),
                   ["threshold", "true_pos", "false_pos"],
                   zip(thr, tp, fp))

    metrics = {"pve_mean": manifest.get("pve_mean"),
               "pve_ci90": manifest.get("pve_ci90")}
    if truth_mask.any():
        metrics["rpv_dense"] = rpv(beta_bar, beta_true, truth.tau, g.col_variance)
        for top in (10, 30, 100):
            sparse = np.zeros(p)
            keep = np.argsort(-pips, kind="stable")[:top]
            sparse[keep] = beta_bar[keep]
            metrics[f"rpv_top{top}"] = rpv(sparse, beta_true, truth.tau,
                                           g.col_variance)
        metrics["mspe_dense"] = mspe(beta_bar, beta_true, truth.tau,
                                     g.col_variance)
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2)
    _write_manifest(args.out, "evaluate", args, {})
    return 0


def _cmd_predict(args) -> int:
    snps, manifest, _, _ = _load_run_dir(args.model_dir)
    beta_bar = np.array([float(r["beta_bar"]) for r in snps])
    col_means = np.array([float(r["col_mean"]) for r in snps])
    y_mean = float(manifest.get("y_mean", 0.0))
    g = load_genotypes(args.geno)
    if g.p != beta_bar.shape[0]:
        raise ValueError(f"genotype file has {g.p} covariates, "
                         f"model has {beta_bar.shape[0]}")
    values = np.nan_to_num(g.values, nan=0.0) + np.where(
        np.isnan(g.values), col_means, 0.0)
    preds = rb_predict(values, beta_bar, col_means, y_mean)
    _write_csv(args.out, ["individual", "prediction"],
               ((i, float(v)) for i, v in enumerate(np.atleast_1d(preds))))
    return 0


def _cmd_regions(args) -> int:
    snps, _, _, gammas = _load_run_dir(args.run_dir)
    pips = np.array([float(r["pip"]) for r in snps])
    chroms = [r["chromosome"] for r in snps]
    positions = np.array([int(r["position"]) for r in snps], dtype=np.int64)
    regions = region_summaries(pips, chroms, positions, gammas=gammas,
                               window=args.window, overlap=args.overlap)
    _write_regions_csv(args.out, regions)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bvsr",
        description="Bayesian variable selection regression for large-scale "
                    "sparse linear models",
        epilog="Set BVSR_THREADS to cap worker processes for parallel chains.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    sim = subs.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--n-causal", type=int, default=30)
    sim.add_argument("--effect-dist", choices=["normal", "double-exponential"],
                     default="normal")
    sim.add_argument("--pve", type=float, default=0.25)
    sim.add_argument("--maf-lo", type=float, default=0.05)
    sim.add_argument("--maf-hi", type=float, default=0.5)
    sim.add_argument("--binary", action="store_true")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=_cmd_simulate)

    run = subs.add_parser("run", help="sample the posterior for a quantitative trait")
    _add_run_options(run, binary=False)
    run.set_defaults(func=lambda a: _run_common(run, a, binary=False))

    runb = subs.add_parser("run-binary", help="sample the posterior for a binary trait")
    _add_run_options(runb, binary=True)
    runb.set_defaults(func=lambda a: _run_common(runb, a, binary=True))

    ev = subs.add_parser("evaluate", help="score a run against simulation truth")
    ev.add_argument("--run-dir", required=True)
    ev.add_argument("--truth", required=True, help="truth.json from simulate")
    ev.add_argument("--geno", required=True)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=_cmd_evaluate)

    pr = subs.add_parser("predict", help="predict responses for new genotypes")
    pr.add_argument("--model-dir", required=True, help="output directory of a run")
    pr.add_argument("--geno", required=True)
    pr.add_argument("--out", required=True, help="predictions CSV path")
    pr.set_defaults(func=_cmd_predict)

    rg = subs.add_parser("regions", help="recompute genomic-window summaries")
    rg.add_argument("--run-dir", required=True)
    rg.add_argument("--window", type=int, default=1_000_000)
    rg.add_argument("--overlap", type=int, default=500_000)
    rg.add_argument("--out", required=True)
    rg.set_defaults(func=_cmd_regions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except SystemExit as e:  # parser.error raised during post-parse checks
        return e.code if isinstance(e.code, int) else 2
    except Exception as e:  # runtime failures map to exit code 1
        print(f"bvsr: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
