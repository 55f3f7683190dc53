import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gaussian_blob(dims, sigma_frac=0.18):
    """Smooth bump centred in the grid that is ~0 at the edges."""
    grid = np.indices(dims, dtype=np.float64)
    r2 = sum(((g - (n - 1) / 2) / (sigma_frac * n)) ** 2 for g, n in zip(grid, dims))
    return np.exp(-r2 / 2)
