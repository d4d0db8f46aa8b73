import numpy as np
import pytest

from abelhiggs.lattice import Grid, LatticeConfig2D


def smooth_config(n, lam=1.5, eps=1.0, seed=0, amp=0.3):
    """Random smooth periodic configuration on [0, 2 pi)^2."""
    rng = np.random.default_rng(seed)
    L = 2 * np.pi
    grid = Grid((n, n), L / n, (0.0, 0.0), (True, True))
    x, y = grid.mesh()
    c = rng.normal(size=12)
    rho = 1 + amp * (c[0] * np.sin(x + c[1]) + c[2] * np.cos(y + c[3]) * np.sin(x))
    theta = c[4] * np.sin(x + y) + c[5] * np.cos(2 * y + c[6])
    phi = rho * np.exp(1j * theta)
    h = grid.spacing

    def a1(x, y):
        return amp * (c[7] * np.sin(y) + c[8] * np.cos(x + 2 * y))

    def a2(x, y):
        return amp * (c[9] * np.cos(x) + c[10] * np.sin(2 * x - y + c[11]))

    # link values as exact line averages (Simpson) of the smooth 1-form
    def lineavg(f, x, y, dx, dy):
        return (f(x, y) + 4 * f(x + dx / 2, y + dy / 2) + f(x + dx, y + dy)) / 6

    a = np.array([lineavg(a1, x, y, h, 0), lineavg(a2, x, y, 0, h)])
    return LatticeConfig2D(grid, phi, a, eps, lam)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
