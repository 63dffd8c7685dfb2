import numpy as np
import pytest

from skippath import Dataset, LossConfig
from skippath.models import InnerNetParams, SkipNetParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_entries(rng, shape, low=0.15, high=1.1):
    """Entries bounded away from zero so relu/L1 kinks stay far away."""
    return np.sign(rng.normal(size=shape)) * rng.uniform(low, high, size=shape)


def smooth_skip_params(rng, n=3, m=6, d_y=2, d_g=4, d_o=4, hidden=(8,)):
    dims = [d_g, *hidden, d_o]
    layers = tuple(smooth_entries(rng, (dims[i + 1], dims[i])) for i in range(len(dims) - 1))
    return SkipNetParams(
        W1=smooth_entries(rng, (m, n)),
        W2=smooth_entries(rng, (d_y, m)),
        V2=smooth_entries(rng, (d_g, m)),
        V1=smooth_entries(rng, (m, d_o)),
        theta=InnerNetParams(layers),
    )


@pytest.fixture
def small_dataset(rng):
    X = rng.uniform(-1.0, 1.0, size=(60, 3))
    Y = rng.uniform(-1.0, 1.0, size=(60, 1))
    return Dataset(X=X, Y=Y)


@pytest.fixture
def mse_cfg():
    return LossConfig(kind="mse", kappa=0.01)
