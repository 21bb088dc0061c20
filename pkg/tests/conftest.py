import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


def smooth_field(grid, rng, bumps=3, width=0.35):
    """Sum of random signed Gaussian bumps, masked to the grid interior."""
    centers = rng.uniform(-0.5, 0.5, size=(bumps, grid.dim)) * grid.half_extent
    amps = rng.normal(size=bumps)

    def f(*x):
        out = 0.0
        for c, a in zip(centers, amps):
            out = out + a * np.exp(-sum((xi - ci) ** 2 for xi, ci in zip(x, c)) / (2 * width ** 2))
        return out

    return grid.sample(f)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
