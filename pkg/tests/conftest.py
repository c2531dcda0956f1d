import numpy as np
import pytest

from growthpaths.basis import basis_from_knots
from growthpaths.dataset import SparseDataset, Subject
from growthpaths.simharness import generate, setting_spec


def make_dataset(times, values, covariates=None, domain=None, prefix="s"):
    """Build a dataset from per-subject arrays."""
    subjects = []
    for i, (t, y) in enumerate(zip(times, values)):
        x = None if covariates is None else float(covariates[i])
        subjects.append(Subject(f"{prefix}{i}", np.asarray(t, float), np.asarray(y, float), x))
    return SparseDataset(tuple(subjects), domain)


def rank_one_data(n=200, m=6, seed=0, domain=(9.0, 16.0), scale=10.0):
    """Noiseless ``Y_ij = r_i phi(T_ij)`` with ``phi`` in the span of a quadratic basis."""
    rng = np.random.default_rng(seed)
    basis = basis_from_knots(domain, 2, [domain[0] + (domain[1] - domain[0]) / 3,
                                         domain[0] + 2 * (domain[1] - domain[0]) / 3])
    alpha = rng.normal(size=basis.dim)
    alpha = alpha / basis.norm(alpha)
    if alpha @ basis.integrals < 0:
        alpha = -alpha
    r = rng.normal(0, scale, n)
    times = np.sort(rng.uniform(*domain, size=(n, m)), axis=1)
    values = r[:, None] * basis.functions(alpha, times.ravel()).reshape(n, m)
    return make_dataset(times, values, domain=domain), basis, alpha, r


@pytest.fixture(scope="session")
def setting_data():
    """One bivariate-normal synthetic sample (N=500, m=6) and its truth."""
    return generate(setting_spec("normal", seed=11))


@pytest.fixture(scope="session")
def empirical_data():
    return generate(setting_spec("empirical", seed=12))
