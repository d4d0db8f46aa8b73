import math

import numpy as np
import pytest
from scipy.ndimage import map_coordinates

from abelhiggs.diagnostics import track_cores
from abelhiggs.evolve import (EvolutionState, Evolver, axisymmetric_grid, gauss_residual,
                              state_distance)
from abelhiggs.initdata import phase_links
from abelhiggs.lattice import Grid
from abelhiggs.vortex2d import minimize2d

from conftest import smooth_config


def _periodic(n=16, h=0.25):
    return Grid((n, n), h, (0.0, 0.0), (True, True))


def _state(grid, phi, a, pi=None, e=None, eps=0.5, lam=1.0, mode="planar"):
    pi = np.zeros_like(phi, dtype=complex) if pi is None else pi
    e = np.zeros_like(a) if e is None else e
    return EvolutionState(grid, phi, pi, a, e, eps, lam, mode)


def _gauge(st, chi):
    h = st.grid.spacing
    g = np.exp(1j * chi)
    a = np.array([st.a[i] + (np.roll(chi, -1, i) - chi) / h for i in range(st.grid.ndim)])
    return st.copy(phi=g * st.phi, pi=g * st.pi, a=a)


def test_vacuum_stays_vacuum():
    g = Grid((16, 16), 0.1)
    st = _state(g, np.ones(g.dims, complex), np.zeros((2,) + g.dims))
    ev = Evolver(st, 0.05)
    aphi, aa = ev.rhs(st)
    assert np.abs(aphi).max() == 0 and np.abs(aa).max() == 0
    out = ev.run(st, 10000, monitor_every=0)
    assert np.abs(out.phi - 1).max() < 1e-12 and np.abs(out.a).max() < 1e-12


def test_pure_gauge_is_static():
    g = Grid((24, 24), 0.2)
    x, y = g.mesh()
    q = 2.0 * np.sin(x) * np.cos(0.7 * y) + 0.5 * x
    st = _state(g, np.exp(1j * q), phase_links(q, g))
    aphi, aa = Evolver(st, 0.1).rhs(st)
    assert np.abs(aphi).max() < 1e-10 and np.abs(aa).max() < 1e-10


@pytest.mark.parametrize("delta", [0.1, -0.05])
def test_uniform_modulus_scalar_formula(delta):
    """Euler-Lagrange force of the potential lam (|phi|^2 - 1)^2 / (8 eps^2)."""
    g = _periodic()
    eps, lam = 0.5, 1.3
    st = _state(g, np.full(g.dims, 1 + delta, complex), np.zeros((2,) + g.dims), eps=eps, lam=lam)
    aphi, aa = Evolver(st, 0.1).rhs(st)
    want = -(lam / (2 * eps ** 2)) * ((1 + delta) ** 2 - 1) * (1 + delta)
    assert np.abs(aphi - want).max() < 1e-12 * abs(want)
    assert np.abs(aa).max() == 0


def test_cfl_violation():
    g = _periodic()
    st = _state(g, np.ones(g.dims, complex), np.zeros((2,) + g.dims))
    with pytest.raises(ValueError, match="CFL"):
        Evolver(st, 0.6 * g.spacing)
    ev = Evolver(st, 0.1)
    with pytest.raises(ValueError, match="CFL"):
        ev.step(st, 0.2)


def test_invalid_state():
    g = _periodic()
    with pytest.raises(ValueError):
        _state(g, np.ones(g.dims, complex), np.zeros((2,) + g.dims), eps=-1)
    with pytest.raises(ValueError):
        _state(g, np.ones(g.dims, complex), np.zeros((2,) + g.dims), mode="full3d")


def _random_dynamic(seed=3):
    u = smooth_config(32, eps=0.5, seed=seed)
    x, y = u.grid.mesh()
    c = np.random.default_rng(seed).normal(size=4)
    pi = 0.1 * (c[0] * np.sin(x + y) + 1j * c[1] * np.cos(2 * x - y)) * u.phi
    e = 0.1 * np.array([c[2] * np.cos(y), c[3] * np.sin(x + y)])
    return _state(u.grid, u.phi, u.a, pi, e, eps=u.epsilon, lam=u.lam)


def test_time_reversal():
    st = _random_dynamic()
    ev = Evolver(st, 0.5 * st.grid.spacing)
    fwd = ev.run(st, 1000, monitor_every=0)
    back = ev.run(ev.time_reverse(fwd), 1000, monitor_every=0)
    back = ev.time_reverse(back)
    assert state_distance(back, st) < 1e-8
    assert state_distance(fwd, st) > 1e-2


def test_energy_and_gauss_conserved():
    st = _random_dynamic(5)
    h = st.grid.spacing
    drift = []
    for f in (4, 8):
        ev = Evolver(st, h / f)
        E0 = ev.total_energy(st)[0]
        _, g0, _ = ev.gauss_residual(st)
        out = ev.run(st, 25 * f, monitor_every=0)
        drift.append(abs(ev.total_energy(out)[0] / E0 - 1))
        # the discrete Gauss law is propagated exactly
        _, g1, _ = ev.gauss_residual(out)
        assert abs(g1 - g0) < 1e-10 * max(1.0, g0)
    # second-order integrator: drift falls by 4 per halving of dt
    assert drift[1] < 1e-3
    assert 3.2 < drift[0] / drift[1] < 4.8


def test_gauss_reports_injected_divergence(rng):
    g = _periodic()
    eps = 0.7
    e = rng.normal(size=(2,) + g.dims)
    st = _state(g, np.ones(g.dims, complex), np.zeros((2,) + g.dims), e=e, eps=eps)
    res, l2, mx = gauss_residual(st)
    h = g.spacing
    div = sum((e[i] - np.roll(e[i], 1, i)) / h for i in range(2))
    assert np.abs(res - eps ** 2 * div).max() < 1e-12
    assert abs(l2 - math.sqrt(np.sum(h * h * (eps ** 2 * div) ** 2))) < 1e-10
    assert mx == pytest.approx(np.abs(eps ** 2 * div).max())


def test_gauge_commutes_with_step(rng):
    st = _random_dynamic(7)
    x, y = st.grid.mesh()
    chi = 0.8 * np.sin(x + 2 * y) + 0.3 * np.cos(3 * x)
    ev = Evolver(st, 0.09)
    a = _gauge(ev.run(st, 20, monitor_every=0), chi)
    b = ev.run(_gauge(st, chi), 20, monitor_every=0)
    for f in ("phi", "pi", "a", "e"):
        assert np.abs(getattr(a, f) - getattr(b, f)).max() < 1e-10


def test_static_vortex_core_fixed():
    eps = 1.0
    g = Grid.centered(6.0, 0.25, cell_centered=True)
    u = minimize2d(1, 1.0, g, epsilon=eps, tol=1e-9)
    st = EvolutionState.at_rest(g, u.phi, u.a, eps, 1.0)
    ev = Evolver(st, 0.125)
    c0 = np.array(track_cores(st)[0].position)
    out = ev.run(st, int(10 * eps / 0.125), monitor_every=0)
    c1 = np.array(track_cores(out)[0].position)
    assert np.hypot(*(c1 - c0)) < 0.1 * eps
    assert np.hypot(*c0) < 0.5 * g.spacing


def test_gauss_after_thousand_steps():
    # periodic box: no frozen layers, so the light-cone precondition is moot
    u = smooth_config(32, eps=0.7)
    x, y = u.grid.mesh()
    # a real multiple of phi satisfies <i phi, pi> = 0, so the data obey Gauss
    pi = 0.3 * np.sin(x) * np.cos(y) * u.phi
    st = _state(u.grid, u.phi, u.a, pi=pi, eps=u.epsilon, lam=u.lam)
    ev = Evolver(st, 0.5 * u.grid.spacing)
    E0 = ev.total_energy(st)[0]
    out = ev.run(st, 1000, monitor_every=0)
    _, l2, _ = ev.gauss_residual(out)
    assert l2 < 1e-6 * E0
    assert state_distance(out, st) > 1e-3


def test_box_precondition():
    g = Grid((20, 20), 0.1)
    x, y = g.mesh()
    dist = np.maximum(np.hypot(x - 1, y - 1) - 0.2, 0)
    st = _state(g, np.ones(g.dims, complex), np.zeros((2,) + g.dims), eps=0.1)
    ev = Evolver(st, 0.05, distance=dist)
    ev.check_box(0.1)
    with pytest.raises(ValueError, match="box too small"):
        ev.check_box(2.0)


def test_silent_monitor_sees_nothing_outside_light_cone():
    g = Grid((60, 60), 0.05)
    x, y = g.mesh()
    r = np.hypot(x - 1.5, y - 1.5)
    phi = 1 + 0.1 * np.exp(-(r / 0.1) ** 2)
    st = _state(g, phi.astype(complex), np.zeros((2,) + g.dims), eps=0.2)
    dist = np.maximum(r - 0.6, 0)
    ev = Evolver(st, 0.025, distance=dist, margin=0.1)
    ev.run(st, 40, monitor_every=1)
    assert ev.silent_max < 1e-8
    assert ev.history[-1].gauss_max < 1e-12


def test_axisymmetric_matches_full3d():
    """A z-axis-symmetric pulse evolved in (rho, z) and on a 3D grid."""
    eps, lam, h, T = 0.3, 1.0, 0.05, 0.3

    def bump(r, z):
        return 1 + 0.2 * np.exp(-((r ** 2 + z ** 2) / 0.15))

    ga = axisymmetric_grid(1.0, 1.0, h)
    r, z = ga.mesh()
    sa = _state(ga, bump(r, z).astype(complex), np.zeros((2,) + ga.dims), eps=eps, lam=lam,
                mode="axisymmetric")
    eva = Evolver(sa, h / 2)
    oa = eva.run(sa, int(T / (h / 2)), monitor_every=0)

    n = 40
    g3 = Grid((n, n, n), h, (-(n - 1) * h / 2,) * 3)
    X, Y, Z = g3.mesh()
    s3 = _state(g3, bump(np.hypot(X, Y), Z).astype(complex), np.zeros((3,) + g3.dims), eps=eps,
                lam=lam, mode="full3d")
    ev3 = Evolver(s3, h / 2)
    o3 = ev3.run(s3, int(T / (h / 2)), monitor_every=0)
    # compare along the x axis (y, z = 0 falls between sites: interpolate)
    rho = ga.origin[0] + h * np.arange(10)
    zc = (0.0 - ga.origin[1]) / h
    va = map_coordinates(oa.phi.real, [np.arange(10), np.full(10, zc)], order=3)
    c = (rho - g3.origin[0]) / h
    mid = (0.0 - g3.origin[0]) / h
    v3 = map_coordinates(o3.phi.real, [c, np.full(10, mid), np.full(10, mid)], order=3)
    assert np.abs(va - v3).max() < 5e-3
    # regularity at the axis: the first two rho sites agree to O(h^2)
    assert abs(oa.phi[0, int(zc)] - oa.phi[1, int(zc)]) < 0.05
