import numpy as np
import pytest

from bvsr.data import center_phenotype, impute_and_center
from bvsr.simulate import SimulationSpec, sim_genotypes, sim_phenotypes


def make_dataset(p=6, n=40, n_causal=2, pve=0.35, seed=11, effect="normal"):
    """Small centered dataset plus truth, shared across test modules."""
    spec = SimulationSpec(p=p, n=n, n_causal=n_causal, target_pve=pve,
                          effect_dist=effect, seed=seed)
    g = sim_genotypes(spec)
    y, truth = sim_phenotypes(g, spec)
    gc = impute_and_center(g)
    yc = center_phenotype(y)
    return gc, yc, truth


@pytest.fixture(scope="session")
def small_data():
    return make_dataset()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
