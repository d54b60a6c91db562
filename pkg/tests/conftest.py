import numpy as np
import pytest

from targeted_neyman import Dataset


def fixture_dataset() -> Dataset:
    """n=4, D=(1,1,1,0), Y=(1,2,3,4) with a distinct 1-D covariate."""
    return Dataset(np.array([[0.0], [1.0], [2.0], [3.5]]),
                   np.array([1, 1, 1, 0]), np.array([1.0, 2.0, 3.0, 4.0]))


def random_instance(rng: np.random.Generator, n: int, k: int, confounded: bool = True) -> Dataset:
    """Continuous covariates with at least two units per arm."""
    X = rng.uniform(-1.0, 1.0, size=(n, k))
    logit = 0.8 * X[:, 0] if confounded else np.zeros(n)
    d = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logit))).astype(int)
    d[:2] = (1, 0)
    d[2:4] = (1, 0)
    y = 1.0 + X @ rng.normal(size=k) + d * 1.5 + rng.normal(size=n)
    return Dataset(X, d, y)


@pytest.fixture
def fx() -> Dataset:
    return fixture_dataset()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
