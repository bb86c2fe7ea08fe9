"""
Shared fixtures: small seeded ensembles and kernels.

Slow acceptance-size runs are enabled with FUZZY_LANDAU_SLOW=1.
"""
import os

import numpy as np
import pytest

from src.ensemble import ParticleEnsemble, sample_initial
from src.kernels import Domain, KernelSet
from src.pairs import PairEngine

SLOW = pytest.mark.skipif(not os.getenv("FUZZY_LANDAU_SLOW"), reason="set FUZZY_LANDAU_SLOW=1 for full-size runs")

TORUS = Domain("torus", 1.0)
PLANE = Domain("whole-space", 1.0)


@pytest.fixture
def engine():
    with PairEngine(threads=1, block_size=8) as pe:
        yield pe


@pytest.fixture
def torus_ensemble() -> ParticleEnsemble:
    return sample_initial("two-bump", 24, seed=11, dim=2, domain=TORUS, perturbation=0.3)


@pytest.fixture
def plane_ensemble() -> ParticleEnsemble:
    return sample_initial("maxwellian", 16, seed=5, dim=2, domain=PLANE)


@pytest.fixture
def torus_kernel() -> KernelSet:
    return KernelSet.build(2, 0.0, kappa="exponential", domain=TORUS)


@pytest.fixture
def plane_kernel() -> KernelSet:
    return KernelSet.build(2, -1.0, kappa="exponential", domain=PLANE)


def single_particle() -> ParticleEnsemble:
    return ParticleEnsemble(np.array([[0.5, 0.5]]), np.array([[0.0, 1.0]]), np.array([1.0]), 0.3, 0.3, TORUS)
