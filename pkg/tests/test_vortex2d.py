import math

import numpy as np
import pytest

from abelhiggs.lattice import (Grid, LatticeConfig2D, bogomolny_residual, circle_loop,
                               energy_density_2d, total_energy_2d, vorticity,
                               winding_degree)
from abelhiggs.vortex2d import (CirclePhase, EnergyTable, confinement, extend_pure_gauge,
                                make_weight, minimize2d, profile_to_lattice, solve_profile,
                                superpose)


@pytest.fixture(scope="module")
def unit():
    return solve_profile(1, 1.0)


def test_profile_bps_energies(unit):
    assert abs(unit.energy() / math.pi - 1) < 5e-3
    assert abs(solve_profile(2, 1.0).energy() / (2 * math.pi) - 1) < 5e-3
    assert abs(solve_profile(1, 1.0, dr=1 / 8).energy() / math.pi - 1) < 5e-3


def test_profile_invariants(unit):
    assert unit.f[0] == 0 and unit.a[0] == 0
    assert np.all((unit.f >= 0) & (unit.f <= 1 + 1e-12))
    assert abs(unit.f[-1] - 1) < 1e-4 and abs(unit.a[-1] - 1) < 1e-4
    assert np.all(np.diff(unit.f) >= -1e-12) and np.all(np.diff(unit.a) >= -1e-12)


def test_profile_bps_equations_converge():
    d1 = solve_profile(1, 1.0, dr=0.02).bps_defects()
    d2 = solve_profile(1, 1.0, dr=0.01).bps_defects()
    assert max(d2) < max(d1) / 2.5
    assert max(d2) < 1e-3


def test_profile_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_profile(0, 1.0)
    with pytest.raises(ValueError):
        solve_profile(1, 1.0, r_max=5)


def test_lambda_two_energy_between(unit):
    e = solve_profile(1, 2.0).energy()
    assert math.pi < e < 2 * math.pi


def test_profile_lattice_consistency(unit):
    errs = []
    for h in (0.5, 0.25):
        u = profile_to_lattice(unit, Grid.centered(12, h))
        errs.append(abs(total_energy_2d(u) - unit.energy()))
    assert errs[1] / unit.energy() < 0.01
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_profile_to_lattice_scale_invariance(unit):
    e = []
    for eps in (1.0, 0.5):
        u = profile_to_lattice(unit, Grid.centered(12 * eps, eps / 4), epsilon=eps)
        e.append(total_energy_2d(u))
    assert abs(e[0] - e[1]) < 0.01 * e[0]


def test_flux_and_winding(unit):
    g = Grid.centered(16, 0.25)
    u = profile_to_lattice(unit, g)
    x, y = [c + 0.125 for c in g.mesh()]
    om = vorticity(u)
    flux = g.spacing ** 2 * om[np.hypot(x, y) < 15].sum()
    assert abs(flux - math.pi) < 1e-3
    p2 = solve_profile(2, 1.0)
    u2 = profile_to_lattice(p2, g)
    assert winding_degree(u2.phi, circle_loop(g, (0, 0), 10)).degree == 2


def test_site_versus_cell_centered(unit):
    e = []
    for cc in (False, True):
        g = Grid.centered(12, 0.25, cell_centered=cc)
        e.append(total_energy_2d(profile_to_lattice(unit, g)))
    assert abs(e[0] - e[1]) < 2e-3


def test_coverage_error(unit):
    with pytest.raises(ValueError):
        profile_to_lattice(unit, Grid.centered(4, 0.25))


def test_bps_residuals_small_for_minimizer(unit):
    res = []
    for h in (0.25, 0.125):
        u = profile_to_lattice(unit, Grid.centered(10, h))
        b = bogomolny_residual(u, +1)
        res.append(h * h * (b.gradient.sum() + b.curvature.sum()))
    assert res[1] < res[0] / 3


def test_pointwise_bogomolny_bound(unit):
    u = profile_to_lattice(unit, Grid.centered(10, 0.125))
    om = vorticity(u)
    om_s = 0.25 * (om + np.roll(om, 1, 0) + np.roll(om, 1, 1) + np.roll(np.roll(om, 1, 0), 1, 1))
    e = energy_density_2d(u)
    assert np.all(np.abs(om_s)[2:-2, 2:-2] <= e[2:-2, 2:-2] + 2e-3)


def test_make_weight():
    w = make_weight(3.0)
    assert w(0.0) == 1 and w(3.0) == 0
    assert w.derivative(0.0) == 0
    r = np.linspace(0, 3, 3001)
    d = w.derivative(r)
    assert np.all(d <= 0) and np.all(d >= -w.C * r ** 2 - 1e-15)
    assert abs(np.trapezoid(-d, r) - 1) < 1e-6


def test_confinement(unit):
    g = Grid.centered(24, 0.25)
    u = profile_to_lattice(unit, g)
    w = make_weight(15.0)
    d1 = confinement(u, 1, w)
    assert 0 < d1 < 1e-2
    assert abs(confinement(u, 2, w) - (math.pi + d1)) < 1e-12
    vac = LatticeConfig2D(g, np.ones(g.dims), np.zeros((2,) + g.dims), 1.0, 1.0)
    assert confinement(vac, 1, w) == math.pi
    vals = [confinement(u, 1, w, (d, 0.0)) for d in np.linspace(0, 7.5, 7)]
    assert np.all(np.diff(vals) > 0)


def test_extend_pure_gauge_minimizer(unit):
    u = profile_to_lattice(unit, Grid.centered(14, 0.25))
    v, rep = extend_pure_gauge(u, 12.0, return_report=True)
    assert rep.annulus_energy <= 5 * 1.0 * rep.boundary_energy
    assert rep.boundary_energy < 1e-6
    x, y = v.grid.mesh()
    r = np.hypot(x, y)
    inside = r <= 12
    assert winding_degree(v.phi, circle_loop(v.grid, (0, 0), 13.5)).degree == 1
    e = v.model().site_density(v.phi, v.a)
    assert e[r > 13.5].max() < 1e-20


def test_extend_copies_inside(unit):
    g = Grid.centered(14, 0.25)
    u = profile_to_lattice(unit, g)
    v = extend_pure_gauge(u, 6.0, grid=g)
    x, y = g.mesh()
    inside = np.hypot(x, y) <= 6
    assert np.array_equal(v.phi[inside], u.phi[inside])


def test_extend_pure_gauge_input_costs_nothing():
    g = Grid.centered(10, 0.25)
    x, y = g.mesh()
    ph = np.arctan2(y, x) + 0.3 * np.sin(x)
    a = np.array([np.angle(np.exp(1j * (np.roll(ph, -1, i) - ph))) / g.spacing
                  for i in range(2)])
    u = LatticeConfig2D(g, np.exp(1j * ph), a, 1.0, 1.0)
    _, rep = extend_pure_gauge(u, 6.0, return_report=True)
    assert rep.annulus_energy < 1e-8


def test_extend_idempotent(unit):
    u = profile_to_lattice(unit, Grid.centered(14, 0.25))
    v1 = extend_pure_gauge(u, 6.0, grid=Grid.centered(12, 0.25))
    v2 = extend_pure_gauge(v1, 8.0, grid=v1.grid, phase=v1.exterior[2])
    x, y = v1.grid.mesh()
    r = np.hypot(x, y)
    changed = (np.abs(v2.phi - v1.phi) > 1e-12) & (r > 6)
    assert np.all((r[changed] > 8) & (r[changed] < 9 + 0.5))


def test_extend_rejects_small_modulus(unit):
    u = profile_to_lattice(unit, Grid.centered(10, 0.25))
    with pytest.raises(ValueError):
        extend_pure_gauge(u, 0.3)


def test_circle_phase_roundtrip():
    th = 2 * np.pi * np.arange(256) / 256
    q = 2 * th + 0.3 * np.sin(3 * th)
    cp = CirclePhase.from_samples(q)
    assert cp.n == 2
    t = np.linspace(-7, 7, 50)
    assert np.max(np.abs(cp(t) - (2 * t + 0.3 * np.sin(3 * t)))) < 1e-7
    assert np.max(np.abs(cp.derivative(t) - (2 + 0.9 * np.cos(3 * t)))) < 1e-5


def test_minimize_lambda1_stays_bps():
    r = minimize2d(1, 1.0, Grid.centered(10, 0.25), return_result=True, tol=1e-6)
    assert r.energy <= r.seed_energy + 1e-12
    assert abs(r.energy / math.pi - 1) < 5e-3


def test_minimize_lambda2_in_range():
    r = minimize2d(1, 2.0, Grid.centered(10, 0.25), return_result=True, tol=1e-6)
    assert math.pi < r.energy < 2 * math.pi


def test_minimize_negative_winding_symmetric():
    e1 = minimize2d(1, 2.0, Grid.centered(10, 0.5), return_result=True).energy
    e2 = minimize2d(-1, 2.0, Grid.centered(10, 0.5), return_result=True).energy
    assert abs(e1 - e2) < 1e-9 * e1


def test_minimize_two_separated_vortices(unit):
    g = Grid.centered(14, 0.25)
    s = superpose(profile_to_lattice(unit, g, (-5, 0), min_cover=5),
                  profile_to_lattice(unit, g, (5, 0), min_cover=5))
    r = minimize2d(2, 1.0, g, seed=s, return_result=True, tol=1e-5)
    assert abs(r.energy / (2 * math.pi) - 1) < 0.01


def test_minimize_rejects_wrong_winding(unit):
    g = Grid.centered(10, 0.25)
    with pytest.raises(ValueError):
        minimize2d(2, 1.0, g, seed=profile_to_lattice(unit, g))


def test_energy_table_criterion():
    t = EnergyTable(1.0, [1, 2, 3], [math.pi, 2 * math.pi, 3 * math.pi], [0, 0, 0],
                    0.25, 24, [0, 0, 0])
    assert abs(t.criterion_margin(2)) < 1e-12
    assert abs(t.criterion_margin(3)) < 1e-12
    # splitting 1 = 2 + (-1) is the cheapest nontrivial one
    assert abs(t.criterion_margin(1) - 2 * math.pi) < 1e-12
    t2 = EnergyTable(2.0, [1, 2], [3.6, 7.6], [0, 0], 0.25, 24, [0, 0])
    assert t2.criterion_margin(2) < 0 and t2.is_monotone()


def test_energy_table_csv(tmp_path):
    t = EnergyTable(1.0, [1], [math.pi], [0.0], 0.25, 24, [1e-7])
    t.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "n,lambda,energy,grid_h,grid_extent,residual"
    assert float(lines[1].split(",")[2]) == math.pi
