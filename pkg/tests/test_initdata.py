import json
import math

import numpy as np
import pytest

from abelhiggs.evolve import Grid, gauss_residual
from abelhiggs.initdata import (
    AxisymmetricPhase, assemble_3d, assemble_axisymmetric, exterior_phase, phase_links,
    ring_grid, solid_angle, truncate_minimizer, tube_winding,
)
from abelhiggs.lattice import curvature, plaquette_winding
from abelhiggs.vortex2d import minimize2d
from abelhiggs.worldsheet import NormalChart, build_surface, circle

EPS = 0.1
H = EPS / 4
RHO1 = 0.9


@pytest.fixture(scope="module")
def vortex():
    g = Grid.centered(RHO1 / 2 + 8 * H + 4 * EPS, H, cell_centered=True)
    return minimize2d(1, 1.0, g, epsilon=EPS, tol=1e-8, return_result=True)


@pytest.fixture(scope="module")
def truncated(vortex):
    return truncate_minimizer(vortex.config, RHO1, guard=3.0, bound=5e-2)


@pytest.fixture(scope="module")
def ring(truncated):
    ut, rep = truncated
    grid = ring_grid(1.0, EPS, RHO1, 0.3, h=H)
    return assemble_axisymmetric(ut, 1.0, grid, report=rep, rho1=RHO1)


def _pure_gauge_outside(phi, a, grid, mask):
    """max |D phi| and |F| over links / plaquettes with both ends in ``mask``."""
    h = grid.spacing
    d = 0.0
    for i in range(grid.ndim):
        u = np.exp(-1j * h * a[i])
        lm = mask & np.roll(mask, -1, i) & grid.link_mask(i)
        d = max(d, float(np.abs(u * np.roll(phi, -1, i) - phi)[lm].max(initial=0.0)) / h)
    pm = mask & np.roll(mask, -1, 0) & np.roll(mask, -1, 1) & np.roll(np.roll(mask, -1, 0), -1, 1)
    f = float(np.abs(curvature(a, grid))[pm & grid.plaquette_mask(0, 1)].max(initial=0.0))
    return d, f


def test_truncation(vortex, truncated):
    ut, rep = truncated
    assert rep.winding == 1
    assert abs(rep.energy_change) < 5e-2 * rep.energy_before
    assert rep.pure_gauge_radius <= RHO1 / 2
    x, y = ut.grid.mesh()
    out = np.hypot(x, y) > rep.pure_gauge_radius + H
    assert np.abs(np.abs(ut.phi[out]) - 1).max() < 1e-12
    d, f = _pure_gauge_outside(ut.phi, ut.a, ut.grid, out)
    assert d < 1e-10 and f < 1e-10


def test_truncation_preconditions(vortex):
    with pytest.raises(ValueError, match="guard"):
        truncate_minimizer(vortex.config, RHO1, guard=8.0)
    with pytest.raises(ValueError, match="energy"):
        truncate_minimizer(vortex.config, RHO1, guard=3.0, bound=1e-14)


def test_ring_data(ring, truncated):
    ut, rep = truncated
    st = ring.state
    _, l2, mx = gauss_residual(st)
    assert l2 == 0 and mx == 0
    assert tube_winding(ring) == 1
    assert ring.overlap_mismatch < 1e-12
    # total energy = length * cross-section energy, up to curvature corrections
    assert abs(ring.energy / (2 * math.pi * rep.energy_after) - 1) < 0.05
    # exterior is an exact pure gauge: no energy, no curvature
    r, z = st.grid.mesh()
    out = np.hypot(r - 1.0, z) > ring.tube_radius + 2 * H
    d, f = _pure_gauge_outside(st.phi, st.a, st.grid, out)
    assert d < 1e-10 and f < 1e-10
    shares = st.model().site_shares(st.phi, st.a)
    assert abs(shares[out].sum()) < 1e-12 * ring.energy
    # exactly one plaquette carries winding, at the ring
    w = plaquette_winding(st.phi, st.a, st.grid)
    idx = np.argwhere(w != 0)
    assert len(idx) == 1 and w[tuple(idx[0])] == 1
    assert abs(st.grid.origin[0] + (idx[0][0] + 0.5) * H - 1.0) < H


def test_ring_requires_alignment(truncated):
    ut, rep = truncated
    grid = ring_grid(1.0 + H / 3, EPS, RHO1, 0.3, h=H)
    with pytest.raises(ValueError, match="aligned"):
        assemble_axisymmetric(ut, 1.0 + H / 3, grid, report=rep, rho1=RHO1)


def test_ring_manifest(ring):
    d = json.loads(ring.manifest(circle(1.0)))
    for key in ("epsilon", "lambda", "m", "rho1", "grid", "curve_hash", "energy"):
        assert key in d
    assert d["m"] == 1 and d["mode"] == "axisymmetric"


def _loop_winding(q_of_points, center, normal_axis, radius, n=400):
    t = 2 * np.pi * np.arange(n + 1) / n
    pts = np.zeros((n + 1, 3))
    pts[:] = center
    a, b = [k for k in range(3) if k != normal_axis]
    pts[:, a] += radius * np.cos(t)
    pts[:, b] += radius * np.sin(t)
    q = q_of_points(pts)
    steps = np.angle(np.exp(1j * np.diff(q)))
    return steps.sum() / (2 * np.pi)


@pytest.mark.parametrize("m", [1, 2])
def test_solid_angle_linking(m):
    c = circle(1.0)
    s = c.L * np.arange(256) / 256
    pts = c(s)

    def q(x):
        return -0.5 * m * solid_angle(pts, x)

    # small loop around the curve in the (nu1, nu2) = (x, z) plane links it once
    assert abs(_loop_winding(q, (1.0, 0.0, 0.0), 1, 0.2) - m) < 1e-9
    # a loop far from the curve does not link it
    assert abs(_loop_winding(q, (3.0, 0.0, 0.0), 1, 0.2)) < 1e-9
    # the disk seen from its center covers a hemisphere
    assert abs(abs(solid_angle(pts, np.zeros(3))) - 2 * np.pi) < 1e-3
    # exterior_phase uses the same orientation
    g = Grid((9, 9, 9), 0.1, (0.65, -0.35, -0.35))
    qe = exterior_phase(c, m, g, samples=256)
    X = np.stack(g.mesh(), -1)
    assert np.allclose(qe, q(X.reshape(-1, 3)).reshape(g.dims))


def test_axisymmetric_phase_links():
    g = Grid((40, 40), 0.05, (0.025, -0.975))
    q = exterior_phase(circle(1.0), 1, g, mode="axisymmetric", R0=1.0)
    r, z = g.mesh()
    assert np.allclose(np.exp(1j * q), np.exp(1j * np.arctan2(z, r - 1.0)))
    a = phase_links(q, g)
    f = curvature(a, g)
    far = np.hypot(r - 1.0, z) > 0.1
    assert np.abs(f[far & g.plaquette_mask(0, 1)]).max() < 1e-10


def test_assemble_3d_smoke(truncated):
    ut, rep = truncated
    ws = build_surface(circle(1.0), 0.2)
    chart = NormalChart(ws, rho0=0.8)
    h = 2 * H
    n, nz = 66, 26
    g = Grid((n, n, nz), h, (-(n - 1) * h / 2, -(n - 1) * h / 2, -(nz - 1) * h / 2))
    # the 3D grid is coarser than the cross-section: resample the truncated data
    data = assemble_3d(chart, ut, g, report=rep, rho1=RHO1)
    st = data.state
    _, l2, _ = gauss_residual(st)
    assert l2 == 0
    # winding 1 on a loop around the string in the y = 0 plane
    X, Y, Z = g.mesh()
    j0 = int(round((0.0 - g.origin[1]) / h))
    phi = st.phi[:, j0, :]
    x = X[:, j0, 0]
    z = Z[0, j0, :]
    th = 2 * np.pi * np.arange(200) / 200
    from scipy.ndimage import map_coordinates
    ci = (1.0 + 0.35 * np.cos(th) - x[0]) / h
    ck = (0.35 * np.sin(th) - z[0]) / h
    vals = map_coordinates(phi.real, [ci, ck], order=1) + 1j * map_coordinates(phi.imag, [ci, ck], order=1)
    steps = np.angle(vals[np.r_[1:200, 0]] / vals)
    assert round(steps.sum() / (2 * np.pi)) == 1
    # energy close to length times the cross-section energy
    assert abs(data.energy / (2 * math.pi * rep.energy_after) - 1) < 0.15
    # far from the string the data is vacuum
    shares = st.model().site_shares(st.phi, st.a)
    far = data.info["tube_distance"] > 0.4
    assert abs(shares[far].sum()) < 1e-8 * data.energy


def test_axisymmetric_phase_object():
    from abelhiggs.vortex2d import CirclePhase
    q2 = CirclePhase(1, np.linspace(0, 2 * np.pi, 16, endpoint=False), np.zeros(16))
    ph = AxisymmetricPhase(q2, 1.0)
    assert ph.m == 1
    assert abs(ph(1.0, 0.5) - math.pi / 2) < 1e-12
