import numpy as np
import pytest

from equipoise import Dataset


@pytest.fixture
def small_sample():
    """A fixed 10-unit, 2-covariate sample used by hand-computed oracles."""
    X = np.array(
        [
            [0.5, -1.2],
            [1.1, 0.3],
            [-0.4, 0.8],
            [0.0, -0.5],
            [2.0, 1.5],
            [-1.3, 0.2],
            [0.7, -0.9],
            [-0.2, 1.1],
            [1.4, -0.1],
            [-0.8, -1.6],
        ]
    )
    z = np.array([1, 1, 0, 1, 1, 0, 0, 1, 0, 0])
    y = np.array([2.3, 1.9, 0.4, 1.1, 3.0, -0.2, 0.9, 2.2, 0.1, -0.5])
    return Dataset(
        covariates=X,
        covariate_names=("x1", "x2"),
        treatment=z,
        arms=2,
        outcome=y,
        outcome_family="continuous",
    )


def random_dataset(seed, n=200, p=3, gamma=1.0, delta=0.5):
    """Random two-arm sample via the package's own generator."""
    from equipoise import DgpConfig, generate

    return generate(DgpConfig(n=n, p=p, overlap_level=gamma, heterogeneity=delta), seed)
