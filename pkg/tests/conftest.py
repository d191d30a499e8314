import numpy as np
import pytest

from handbmc import fit_limits
from handbmc.synthetic import sample_corpus


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix from a unit quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@pytest.fixture(scope="session")
def corpus():
    """64 synthetic meter-scale poses shared across tests."""
    return sample_corpus(np.random.default_rng(20240501), 64)


@pytest.fixture(scope="session")
def limits(corpus):
    """Min/max limits fitted to the shared corpus."""
    return fit_limits(corpus, quantile=0.0)


@pytest.fixture(scope="session")
def unit_corpus():
    """Corpus at 10x scale (coordinates O(1)) for finite differences."""
    return sample_corpus(np.random.default_rng(20240502), 64, scale=10.0)


@pytest.fixture(scope="session")
def unit_limits(unit_corpus):
    return fit_limits(unit_corpus, quantile=0.0)
