"""Shared fixtures: the 3-dim CIR benchmark model and a simulated dataset."""
import numpy as np
import pytest

from choldiff.cholesky import CholeskyFactor, CorrScaleSpec, corr_to_chol
from choldiff.config import strict_lower_from_flat
from choldiff.models import ObservationSet, build_mv_cir
from choldiff.simulate import simulate_euler

TRUE_KAPPA = np.array([0.2, 0.15, 0.22])
TRUE_MU = np.array([2.5, 3.0, 2.0])
TRUE_SIGMA = np.array([0.45, 0.35, 0.40])
TRUE_RHO = np.array([0.45, 0.35, 0.55])  # rho21, rho31, rho32


@pytest.fixture(scope="session")
def cir_spec():
    return build_mv_cir(3, kappa=TRUE_KAPPA, mu=TRUE_MU)


@pytest.fixture(scope="session")
def cir_theta():
    return np.concatenate([TRUE_KAPPA, TRUE_MU])


@pytest.fixture(scope="session")
def cir_C():
    return corr_to_chol(
        CorrScaleSpec(TRUE_SIGMA, strict_lower_from_flat(TRUE_RHO, 3))
    )


@pytest.fixture(scope="session")
def cir_obs(cir_spec, cir_theta, cir_C):
    """n=100 unit-spaced observations (fast unit-test dataset)."""
    path = simulate_euler(cir_spec, cir_C, cir_theta, TRUE_MU, 100.0, 0.01,
                          seed=1234)
    return ObservationSet(path.times[::100], path.states[::100])


def random_corr_scale(rng, d, mask=None):
    """A random valid CorrScaleSpec, optionally respecting a sparsity mask."""
    while True:
        scales = rng.uniform(0.1, 2.0, d)
        # random correlation matrix via a random Gram matrix
        A = rng.standard_normal((d, d + 2))
        R = A @ A.T
        s = np.sqrt(np.diag(R))
        R = R / np.outer(s, s)
        corr = np.tril(R, k=-1)
        if mask is not None:
            corr = np.where(mask.zero, 0.0, corr)
        if np.max(np.abs(corr)) >= 0.999:
            continue
        try:
            spec = CorrScaleSpec(scales, corr)
            corr_to_chol(spec, mask)
        except ValueError:
            continue
        return spec
