import numpy as np
import pytest

from covsense.channel import AngularSpread, geometry_pair, sample_scenario


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_scenario(rng, kind, N_t, N_r, K=2, L=5, spreads=None):
    tx, rx = geometry_pair(kind, N_t, N_r)
    return sample_scenario(rng, tx, rx, K, L, spreads or AngularSpread())


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
