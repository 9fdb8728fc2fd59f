import math

import numpy as np
import pytest

from kpilab.spectral import Field2D, Grid1D, Grid2D, to_spectral


@pytest.fixture
def grid():
    return Grid2D(Grid1D(64, 2.0 * math.pi), Grid1D(32, 4.0 * math.pi))


def random_zero_mean_field(grid: Grid2D, rng: np.random.Generator, modes: int = 6) -> Field2D:
    """Random trigonometric polynomial with no x-mean and modes well inside
    the dealiased band."""
    X, Y = grid.mesh()
    v = np.zeros(grid.shape)
    kx0 = 2.0 * math.pi / grid.gx.length
    ky0 = 2.0 * math.pi / grid.gy.length
    for _ in range(modes):
        kx = rng.integers(1, grid.gx.n // 4)
        ky = rng.integers(-grid.gy.n // 4, grid.gy.n // 4)
        v += rng.normal() * np.cos(kx * kx0 * X + ky * ky0 * Y + rng.uniform(0, 2 * math.pi))
    return Field2D(grid, v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def zero_mean(grid, rng):
    return to_spectral(random_zero_mean_field(grid, rng))
