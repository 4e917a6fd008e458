import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from factgp.dense import Dataset
from factgp.kernel import HyperParams, KernelSpec

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_spec(lengthscale=1.0, signal_variance=1.0, noise_variance=0.1):
    return KernelSpec(HyperParams.from_natural(lengthscale, signal_variance, noise_variance))


def random_data(rng, n, dim=1, lo=-5.0, hi=5.0):
    X = rng.uniform(lo, hi, size=(n, dim))
    y = np.sin(X).sum(axis=1) + 0.3 * rng.standard_normal(n)
    return Dataset(X, y)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def spec():
    return make_spec()
