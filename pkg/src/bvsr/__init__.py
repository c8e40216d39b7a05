"""Bayesian variable selection regression for large-scale sparse linear models."""

__version__ = "0.1.0"

from .data import (
    GenotypeMatrix,
    ParseError,
    Phenotype,
    ValidationError,
    attach_positions,
    center_phenotype,
    drop_missing,
    impute_and_center,
    load_genotypes,
    load_phenotypes,
    quantile_normalize,
)
from .evaluate import (
    calibration_bins,
    mspe,
    power_curve,
    region_summaries,
    rpv,
    single_snp_bf,
    single_snp_log_bf_averaged,
)
from .likelihood import (
    ModelFactorization,
    log_bf,
    refresh_sigma,
    sample_beta_tau,
    update_add,
    update_remove,
    update_swap,
)
from .model import (
    EffectDraw,
    Hyperparameters,
    ModelState,
    log_prior_gamma_given_pi,
    log_prior_pi,
    pve,
    sigma_a_sq,
)
from .probit import (
    LatentAssignment,
    init_latent,
    propose_latent_swap,
    run_chain_binary,
    run_chains_binary,
)
from .raoblackwell import (
    RbAccumulator,
    pip_estimate,
    posterior_mean_beta,
    predict,
    rb_update,
)
from .sampler import (
    ChainConfig,
    PosteriorSamples,
    ProposalConfig,
    SnpRanking,
    merge_samples,
    mh_step,
    propose_local,
    propose_small_world,
    rank_proposal_prob,
    rank_snps,
    run_chain,
    run_chains,
)
from .simulate import SimulationSpec, SimTruth, sim_genotypes, sim_phenotypes
