import math

import numpy as np
import pytest

from abelhiggs.lattice import (Grid, LatticeConfig2D, LatticeModel, bogomolny_residual,
                               circle_loop, covariant_diff, current, curvature,
                               energy_density_2d, gauge_transform, plaquette_winding,
                               total_energy_2d, vorticity, winding_degree)
from abelhiggs.snapshot import KIND_PHI, KIND_REAL, read_snapshot, write_snapshot

from conftest import smooth_config


def open_grid(n=20, h=0.1):
    return Grid((n, n), h, (-(n - 1) * h / 2,) * 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((3, 10), 0.1)
    with pytest.raises(ValueError):
        Grid((10, 10), 0.0)


def test_covariant_diff_vacuum_and_linear():
    g = open_grid()
    x, y = g.mesh()
    a = np.zeros((2,) + g.dims)
    assert np.all(covariant_diff(np.ones(g.dims, complex), a, 0, g) == 0)
    d = covariant_diff(x + 1j * y, a, 0, g)
    assert np.allclose(d[:-1], 1.0, atol=1e-12)


def test_covariant_diff_pure_gauge():
    g = open_grid(32, 0.05)
    x, _ = g.mesh()
    k = 1.7
    a = np.zeros((2,) + g.dims)
    a[0] = k
    d = covariant_diff(np.exp(1j * k * x), a, 0, g)
    assert np.max(np.abs(d)) < 1e-12


def test_curvature_constant_field():
    g = open_grid()
    x, y = g.mesh()
    B, h = 0.8, g.spacing
    # link integrals of (-y B/2, x B/2): midpoint is exact for linear fields
    a = np.array([-B / 2 * y, B / 2 * x])
    f = curvature(a, g)
    assert np.allclose(f[:-1, :-1], B, atol=1e-12)
    assert np.all(f[-1, :] == 0) and np.all(f[:, -1] == 0)
    assert np.all(curvature(np.zeros_like(a), g) == 0)


def test_curvature_of_gradient_vanishes():
    g = open_grid()
    x, y = g.mesh()
    q = np.sin(x) * np.cos(2 * y)
    a = np.array([(np.roll(q, -1, 0) - q) / g.spacing, (np.roll(q, -1, 1) - q) / g.spacing])
    assert np.max(np.abs(curvature(a, g))) < 1e-12


def test_current_real_phi_and_phase_gradient():
    g = open_grid(40, 0.05)
    x, y = g.mesh()
    u = LatticeConfig2D(g, 1 + 0.1 * x, np.zeros((2,) + g.dims), 1.0, 1.0)
    assert np.max(np.abs(current(u))) < 1e-14
    th = 0.5 * np.sin(x) + 0.3 * y ** 2
    u = LatticeConfig2D(g, np.exp(1j * th), np.zeros((2,) + g.dims), 1.0, 1.0)
    j = current(u)
    # the link current sits at the link midpoint
    gx = 0.5 * np.cos(x + g.spacing / 2)
    assert np.max(np.abs(j[0][:-1] - gx[:-1])) < 1e-3


def test_current_plus_a_gauge_invariant():
    u = smooth_config(32)
    x, y = u.grid.mesh()
    v = gauge_transform(u, 0.4 * np.sin(x) * np.cos(y))
    # j is exactly gauge invariant on the lattice, so curl(j + A) is too
    assert np.max(np.abs(current(v) - current(u))) < 1e-12
    assert np.max(np.abs(vorticity(v) - vorticity(u))) < 1e-10


def test_vorticity_pure_gauge():
    g = open_grid(30, 0.05)
    x, y = g.mesh()
    chi = np.sin(3 * x) + x * y
    u0 = LatticeConfig2D(g, np.ones(g.dims), np.zeros((2,) + g.dims), 1.0, 1.0)
    u = gauge_transform(u0, chi)
    assert np.max(np.abs(vorticity(u))) < 1e-12


def test_exact_gauge_invariance():
    u = smooth_config(48, seed=3)
    x, y = u.grid.mesh()
    e0 = total_energy_2d(u)
    v = gauge_transform(u, 0.7 * np.cos(x - 2 * y) + 0.2)
    assert abs(total_energy_2d(v) - e0) < 1e-12 * e0
    w0 = vorticity(u).sum()
    assert abs(vorticity(v).sum() - w0) < 1e-10
    c = gauge_transform(u, np.full(u.grid.dims, 0.3))
    assert np.array_equal(energy_density_2d(c), energy_density_2d(u)) or \
        np.max(np.abs(energy_density_2d(c) - energy_density_2d(u))) < 1e-14


def test_gauge_transform_rejects_multivalued():
    g = open_grid(30, 0.1)
    x, y = g.mesh()
    u = LatticeConfig2D(g, np.ones(g.dims), np.zeros((2,) + g.dims), 1.0, 1.0)
    with pytest.raises(ValueError):
        gauge_transform(u, np.arctan2(y, x))


def test_winding_degree():
    g = open_grid(41, 0.1)
    x, y = g.mesh()
    loop = circle_loop(g, (0, 0), 1.5)
    assert winding_degree(np.ones(g.dims, complex), loop).degree == 0
    r = winding_degree(x + 1j * y, loop)
    assert r.degree == 1 and r.residual < 1e-12
    assert winding_degree(np.conj(x + 1j * y) ** 2, loop).degree == -2
    phi = x + 1j * y
    with pytest.raises(ValueError):
        winding_degree(phi, [(20, 20), (21, 20), (21, 21)])


def test_plaquette_winding_locates_zero():
    g = open_grid(20, 0.1)
    x, y = g.mesh()
    phi = (x - 0.03) + 1j * (y + 0.02)
    n = plaquette_winding(phi, np.zeros((2,) + g.dims), g)
    assert n.sum() == 1
    i, j = np.argwhere(n == 1)[0]
    assert g.axis(0)[i] <= 0.03 <= g.axis(0)[i + 1]


def test_gradient_matches_finite_differences(rng):
    u = smooth_config(16, seed=5, eps=1.0)
    m = LatticeModel(u.grid, 0.7, 1.3)
    gphi, ga = m.gradient(u.phi, u.a)
    d = 1e-6
    for _ in range(5):
        idx = tuple(rng.integers(0, 16, size=2))
        for direction, comp in ((1.0, "re"), (1j, "im")):
            p1 = u.phi.copy(); p1[idx] += d * direction
            p0 = u.phi.copy(); p0[idx] -= d * direction
            num = (m.potential_energy(p1, u.a) - m.potential_energy(p0, u.a)) / (2 * d)
            ana = gphi[idx].real if comp == "re" else gphi[idx].imag
            assert abs(num - ana) < 1e-6 * (1 + abs(ana))
        k = int(rng.integers(0, 2))
        a1 = u.a.copy(); a1[(k,) + idx] += d
        a0 = u.a.copy(); a0[(k,) + idx] -= d
        num = (m.potential_energy(u.phi, a1) - m.potential_energy(u.phi, a0)) / (2 * d)
        assert abs(num - ga[(k,) + idx]) < 1e-6 * (1 + abs(num))


def test_gradient_3d_open(rng):
    g = Grid((5, 6, 4), 0.3)
    phi = rng.normal(size=g.dims) + 1j * rng.normal(size=g.dims)
    a = rng.normal(size=(3,) + g.dims)
    m = LatticeModel(g, 0.5, 2.0)
    gphi, ga = m.gradient(phi, a)
    d = 1e-6
    for _ in range(10):
        idx = tuple(int(rng.integers(0, n)) for n in g.dims)
        k = int(rng.integers(0, 3))
        a1 = a.copy(); a1[(k,) + idx] += d
        a0 = a.copy(); a0[(k,) + idx] -= d
        num = (m.potential_energy(phi, a1) - m.potential_energy(phi, a0)) / (2 * d)
        assert abs(num - ga[(k,) + idx]) < 1e-5 * (1 + abs(num))
        p1 = phi.copy(); p1[idx] += d
        p0 = phi.copy(); p0[idx] -= d
        num = (m.potential_energy(p1, a) - m.potential_energy(p0, a)) / (2 * d)
        assert abs(num - gphi[idx].real) < 1e-5 * (1 + abs(num))


def test_site_shares_sum_to_total():
    u = smooth_config(16, seed=2)
    m = u.model()
    assert math.isclose(m.site_shares(u.phi, u.a).sum(), m.potential_energy(u.phi, u.a),
                        rel_tol=1e-13)
    g = open_grid(16, 0.2)
    v = LatticeConfig2D(g, u.phi, u.a, 1.0, 1.0)
    m = v.model()
    assert math.isclose(m.site_shares(v.phi, v.a).sum(), m.potential_energy(v.phi, v.a),
                        rel_tol=1e-13)


def test_vacuum_energy_zero():
    g = open_grid()
    u = LatticeConfig2D(g, np.ones(g.dims), np.zeros((2,) + g.dims), 0.5, 1.0)
    assert total_energy_2d(u) == 0
    b = bogomolny_residual(u)
    for f in (b.gradient, b.curvature, b.potential, b.defect):
        assert np.all(f == 0)


def test_bogomolny_identity_second_order():
    l1 = []
    for n in (32, 64, 128):
        u = smooth_config(n, seed=7, lam=1.5)
        b = bogomolny_residual(u, +1)
        l1.append(u.grid.spacing ** 2 * np.abs(b.defect).sum())
    r1, r2 = l1[0] / l1[1], l1[1] / l1[2]
    assert 3.2 < r2 < 4.8, (l1, r1, r2)
    u = smooth_config(64, seed=8)
    b = bogomolny_residual(u, -1)
    assert np.all(b.gradient >= 0) and np.all(b.curvature >= 0)


def test_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(3, 4, 5)) + 1j * rng.normal(size=(3, 4, 5))
    write_snapshot(tmp_path / "z.ahvx", z, 0.25, (1.0, 2.0, 3.0), KIND_PHI)
    data, h, origin, kind = read_snapshot(tmp_path / "z.ahvx")
    assert np.array_equal(data, z) and h == 0.25 and kind == KIND_PHI
    assert np.array_equal(origin, [1, 2, 3])
    raw = (tmp_path / "z.ahvx").read_bytes()
    assert raw[:4] == b"AHVX" and len(raw) == 4 + 8 + 12 + 8 + 24 + 4 + z.size * 16
    r = rng.normal(size=(6, 7))
    write_snapshot(tmp_path / "r.ahvx", r, 0.5, (0, 0), KIND_REAL)
    assert np.array_equal(read_snapshot(tmp_path / "r.ahvx")[0], r)
    with pytest.raises(ValueError):
        write_snapshot(tmp_path / "bad.ahvx", z, 0.25, (0, 0, 0), KIND_REAL)
