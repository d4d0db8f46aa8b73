"""Initial data for a vortex string along a closed curve.

The recipe: minimize the 2D energy in the winding-m class, replace the
minimizer by an exact pure gauge outside a disk (truncation), place the
truncated cross-section on every normal disk of the t = 0 chart, and
fill the rest of space with a pure gauge e^{iq}, dq whose phase winds m
times around the curve.  Time derivatives vanish, so the Gauss
constraint holds identically.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .evolve import EvolutionState, axisymmetric_grid, total_energy
from .lattice import LatticeConfig2D, circle_loop, winding_degree
from .vortex2d import _aligned_grid, _site_interp, extend_pure_gauge
from .worldsheet import chart_inverse

__all__ = [
    "TruncationReport", "truncate_minimizer", "solid_angle", "exterior_phase",
    "AxisymmetricPhase", "InitialData", "assemble", "assemble_axisymmetric",
    "assemble_3d", "phase_links", "ring_grid", "tube_winding",
]


@dataclass
class TruncationReport:
    rho1: float
    radius: float
    pure_gauge_radius: float
    energy_before: float
    energy_after: float
    annulus_energy: float
    winding: int

    @property
    def energy_change(self):
        return self.energy_after - self.energy_before


def truncate_minimizer(u2d, rho1, center=(0.0, 0.0), guard=8.0, bound=1e-6, energy_ref=None):
    """Make u2d exactly pure gauge outside B(rho1/2).

    Delegates to ``extend_pure_gauge`` at radius rho1/3 with ramp width
    epsilon.  ``guard`` is the tail-smallness requirement rho1/3 >= guard
    * epsilon and ``bound`` the allowed energy change relative to
    ``energy_ref`` (default: the energy of u2d).
    """
    eps = u2d.epsilon
    s = rho1 / 3
    if s < guard * eps * (1 - 1e-12):
        raise ValueError("rho1/3 = %.4g is below the tail guard %.3g epsilon = %.4g"
                         % (s, guard, guard * eps))
    width = eps
    if s + width > rho1 / 2 + 1e-12:
        raise ValueError("ramp does not fit below rho1/2")
    e0 = u2d.model().potential_energy(u2d.phi, u2d.a)
    ref = e0 if energy_ref is None else energy_ref
    grid = _aligned_grid(u2d, center, rho1 / 2 + 6 * u2d.grid.spacing)
    ut, rep = extend_pure_gauge(u2d, s, center, grid=grid, width=width, return_report=True)
    e1 = ut.model().potential_energy(ut.phi, ut.a)
    report = TruncationReport(rho1, s, s + width, e0, e1, rep.annulus_energy, rep.winding)
    if abs(e1 - e0) > bound * ref:
        raise ValueError("truncation changes the energy by %.3g (> %.3g); epsilon too large "
                         "for rho1" % (e1 - e0, bound * ref))
    return ut, report


# ---------------------------------------------------------------------------
# pure-gauge exterior


def phase_links(q, grid):
    """Link values of dq: wrapped phase differences divided by h.

    Each link takes the branch of q(x+e) - q(x) in (-pi, pi], so every
    plaquette whose corners see a continuous phase has zero curvature.
    """
    h = grid.spacing
    a = np.zeros((grid.ndim,) + grid.dims)
    for i in range(grid.ndim):
        d = np.roll(q, -1, i) - q
        d = np.angle(np.exp(1j * d))
        a[i] = np.where(grid.link_mask(i), d / h, 0.0)
    return a


class AxisymmetricPhase:
    """q(rho, z) = q2d(atan2(z - z0, rho - R0)) in the half-plane."""

    def __init__(self, q2d, R0, z0=0.0):
        self.q = q2d
        self.R0 = float(R0)
        self.z0 = float(z0)

    @property
    def m(self):
        return self.q.n

    def angle(self, rho, z):
        return np.arctan2(z - self.z0, rho - self.R0)

    def __call__(self, rho, z):
        return self.q(self.angle(rho, z))

    def links(self, grid):
        """Link values: the exact phase step along each link."""
        h = grid.spacing
        r, z = grid.mesh()
        th = self.angle(r, z)
        a = np.zeros((2,) + grid.dims)
        for i, (dr, dz) in enumerate(((h, 0.0), (0.0, h))):
            thb = self.angle(r + dr, z + dz)
            dth = np.angle(np.exp(1j * (thb - th)))
            dq = self.q.n * dth + self.q.periodic_part(thb) - self.q.periodic_part(th)
            a[i] = np.where(grid.link_mask(i), dq / h, 0.0)
        return a


def solid_angle(points, x, base=None):
    """Solid angle subtended at x by the closed polygon ``points``.

    The polygon is fanned from ``base`` (default: its centroid) and each
    triangle's signed solid angle is evaluated with the Van Oosterom-
    Strackee formula.  The result jumps by 4 pi across the fan.
    """
    P = np.asarray(points, dtype=float)
    x = np.asarray(x, dtype=float)
    c = P.mean(axis=0) if base is None else np.asarray(base, dtype=float)
    shape = x.shape[:-1]
    X = x.reshape(-1, 3)
    out = np.zeros(len(X))
    Q = np.roll(P, -1, axis=0)
    for i0 in range(0, len(X), 2048):
        xb = X[i0:i0 + 2048][:, None, :]
        r1 = c[None, None, :] - xb
        r2 = P[None, :, :] - xb
        r3 = Q[None, :, :] - xb
        n1 = np.linalg.norm(r1, axis=-1)
        n2 = np.linalg.norm(r2, axis=-1)
        n3 = np.linalg.norm(r3, axis=-1)
        if np.any(np.minimum(n2, n3) < 1e-12):
            raise ValueError("grid point on the loop")
        num = np.einsum("...i,...i", r1, np.cross(r2, r3))
        den = (n1 * n2 * n3 + np.einsum("...i,...i", r1, r2) * n3
               + np.einsum("...i,...i", r1, r3) * n2 + np.einsum("...i,...i", r2, r3) * n1)
        out[i0:i0 + 2048] = 2 * np.arctan2(num, den).sum(axis=1)
    return out.reshape(shape)


def exterior_phase(curve, m, grid, mode="full3d", R0=None, samples=None):
    """Pure-gauge phase winding m times around the curve.

    full3d: q = -(m/2) Omega(x) from the loop's solid angle; the sign
    makes q wind +m in the (nu1, nu2 = nu1 x tau) orientation of the
    normal chart.
    axisymmetric (circle of radius R0 in z = 0): q = m atan2(z, rho - R0).
    """
    if mode == "axisymmetric":
        r, z = grid.mesh()
        if R0 is None:
            R0 = curve.L / (2 * math.pi)
        return m * np.arctan2(z, r - R0)
    if samples is None:
        samples = max(256, int(8 * curve.L / grid.spacing))
    s = curve.L * np.arange(samples) / samples
    pts = curve(s)
    X = np.stack(grid.mesh(), axis=-1)
    return -0.5 * m * solid_angle(pts, X)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class InitialData:
    state: EvolutionState
    m: int
    rho1: float
    truncated: LatticeConfig2D
    truncation: TruncationReport
    energy: float
    chart: object = None
    R0: float = None
    overlap_mismatch: float = 0.0
    tube_radius: float = None
    info: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.state.grid

    def distance_from_tube(self):
        """Per-site distance from the region where the data is not pure gauge."""
        g = self.state.grid
        if self.state.mode == "axisymmetric":
            r, z = g.mesh()
            d = np.hypot(r - self.R0, z) - self.tube_radius
        else:
            d = self.info["tube_distance"]
        return np.maximum(d, 0.0)

    def manifest(self, curve=None):
        g = self.state.grid
        d = {
            "epsilon": self.state.epsilon, "lambda": self.state.lam, "m": self.m,
            "rho1": self.rho1, "mode": self.state.mode, "energy": self.energy,
            "grid": {"dims": list(g.dims), "spacing": g.spacing, "origin": list(g.origin)},
            "truncation": {
                "radius": self.truncation.radius,
                "pure_gauge_radius": self.truncation.pure_gauge_radius,
                "energy_change": self.truncation.energy_change,
                "annulus_energy": self.truncation.annulus_energy,
            },
            "overlap_mismatch": self.overlap_mismatch,
        }
        if self.R0 is not None:
            d["R0"] = self.R0
        if curve is not None:
            d["curve_hash"] = curve.digest()
        h = hashlib.sha256()
        for arr in (self.state.phi, self.state.a):
            h.update(np.ascontiguousarray(arr).tobytes())
        d["data_hash"] = h.hexdigest()[:16]
        return json.dumps(d, indent=2, sort_keys=True)


def assemble_axisymmetric(ut, R0, grid, lam=None, m=None, report=None, rho1=None):
    """Axisymmetric ring data: ut copied onto the (rho, z) half-plane.

    ut must be a truncated cross-section (``exterior`` set) centered at
    the origin of its grid coordinates, with sites aligned to the
    half-plane grid after shifting by R0.  Outside ut's grid the data is
    the analytic pure gauge.
    """
    h = grid.spacing
    if abs(ut.grid.spacing - h) > 1e-15 * h:
        raise ValueError("spacing mismatch")
    if ut.exterior is None:
        raise ValueError("cross-section must be truncated first")
    center, r_pg, q = ut.exterior
    off = [(ut.grid.origin[0] + R0 - grid.origin[0]) / h, (ut.grid.origin[1] - grid.origin[1]) / h]
    shift = [int(round(o)) for o in off]
    if any(abs(o - s) > 1e-8 for o, s in zip(off, shift)):
        raise ValueError("cross-section grid is not aligned with the half-plane grid "
                         "(R0/h must be an integer)")
    if shift[0] < 0 or shift[1] < 0 or shift[0] + ut.grid.dims[0] > grid.dims[0] \
            or shift[1] + ut.grid.dims[1] > grid.dims[1]:
        raise ValueError("half-plane grid does not contain the tube")
    ph = AxisymmetricPhase(q, R0 + center[0], center[1])
    r, z = grid.mesh()
    phi = np.exp(1j * ph(r, z))
    a = ph.links(grid)
    sl = (slice(shift[0], shift[0] + ut.grid.dims[0]), slice(shift[1], shift[1] + ut.grid.dims[1]))
    # overlap check: ut beyond its pure-gauge radius equals the analytic exterior
    rr = np.hypot(r[sl] - R0 - center[0], z[sl] - center[1])
    ov = rr > r_pg + 2 * h
    mism = float(np.abs(ut.phi - phi[sl])[ov].max(initial=0.0))
    for i in range(2):
        lm = ut.grid.link_mask(i) & ov & np.roll(ov, -1, i)
        mism = max(mism, float(h * np.abs(ut.a[i] - a[i][sl])[lm].max(initial=0.0)))
    if mism > 1e-6:
        raise ValueError("overlap mismatch %.3g between tube data and exterior phase" % mism)
    phi[sl] = ut.phi
    for i in range(2):
        inner = ut.grid.link_mask(i)
        a[i][sl] = np.where(inner, ut.a[i], a[i][sl])
    lam = ut.lam if lam is None else lam
    st = EvolutionState.at_rest(grid, phi, a, ut.epsilon, lam, "axisymmetric")
    energy, _ = _energy(st)
    m = q.n if m is None else m
    return InitialData(st, m, rho1, ut, report, energy, R0=R0, overlap_mismatch=mism,
                       tube_radius=r_pg)


def _energy(st):
    return total_energy(st)


def ring_grid(R0, epsilon, rho1, T, h=None, margin=None, layers=2):
    """Half-plane grid for a ring of radius R0 followed for lab time T."""
    h = epsilon / 4 if h is None else h
    margin = 6 * epsilon if margin is None else margin
    reach = rho1 / 2 + T + margin + (layers + 2) * h
    return axisymmetric_grid(R0 + reach, reach, h)


def assemble_3d(chart, ut, grid, m=None, report=None, rho1=None, blend=None):
    """Full 3D data from the t = 0 normal chart.

    Sites with |y_nu| below the pure-gauge radius take the interpolated
    cross-section; elsewhere phi = e^{iq}, with q equal to the cross-
    section's exterior phase near the curve, blended into (m/2) Omega
    between ``blend`` = (r_in, r_out). The default r_in is the larger of
    rho1/2 and three links past the pure-gauge radius, so the blend never
    touches sites or links carrying the cross-section; r_out defaults to
    the chart's rho0.
    """
    if ut.exterior is None:
        raise ValueError("cross-section must be truncated first")
    center, r_pg, q2 = ut.exterior
    m = q2.n if m is None else m
    rho1 = 3 * (r_pg - ut.epsilon) if rho1 is None else rho1
    h = grid.spacing
    rho0 = chart.rho0 if chart.rho0 is not None else 0.5 * rho1
    r_in, r_out = blend if blend is not None else (max(rho1 / 2, r_pg + 3 * h), rho0)
    if r_in < r_pg + 3 * h:
        raise ValueError("blend must start at least 3h outside the pure-gauge radius")
    if r_out <= r_in:
        raise ValueError("blend radii must increase (chart rho0 too small for this grid)")
    X = np.stack(grid.mesh(), axis=-1).reshape(-1, 3)
    curve = chart.curve
    # nearest-curve-point distance for the tube mask
    s = curve.L * np.arange(max(256, int(4 * curve.L / h))) / max(256, int(4 * curve.L / h))
    pts = curve(s)
    from scipy.spatial import cKDTree
    dist, _ = cKDTree(pts).query(X)
    near = dist < r_out * 1.05 + 2 * h
    Y = np.full((len(X), 4), np.nan)
    x4 = np.concatenate([np.zeros((near.sum(), 1)), X[near]], axis=1)
    inv = chart_inverse(chart, x4, rho=r_out * 1.05 + 2 * h)
    Y[near] = inv.y
    rnu = np.where(near, np.hypot(Y[:, 2], Y[:, 3]), np.inf)
    thn = np.arctan2(Y[:, 3], Y[:, 2])
    q_ext = exterior_phase(curve, m, grid).reshape(-1)
    q_tube = np.where(near, q2(np.nan_to_num(thn)), 0.0)
    # constant offset so the two phases agree on average in the blend zone
    zone = near & (rnu > r_in) & (rnu < r_out)
    c = np.angle(np.mean(np.exp(1j * (q_tube - q_ext))[zone])) if np.any(zone) else 0.0
    q_ext = q_ext + c
    t = np.clip((rnu - r_in) / (r_out - r_in), 0.0, 1.0)
    beta = t * t * (3 - 2 * t)
    diff = np.angle(np.exp(1j * (q_ext - q_tube)))
    qtot = np.where(near, q_tube + beta * diff, q_ext)
    qtot = np.where(rnu >= r_out, q_ext, qtot).reshape(grid.dims)
    phi = np.exp(1j * qtot)
    a = phase_links(qtot, grid)
    # tube interior: pull back the cross-section
    core = (rnu < r_pg + 2 * h)
    yc = Y[core]
    pc = np.stack([yc[:, 2] + center[0], yc[:, 3] + center[1]], axis=1)
    phi_flat = phi.reshape(-1)
    phi_flat[core] = _site_interp(ut.phi, ut.grid, pc, order=3)
    phi = phi_flat.reshape(grid.dims)
    cmask = core.reshape(grid.dims)
    for i in range(3):
        lm = (cmask | np.roll(cmask, -1, i)) & grid.link_mask(i)
        if not np.any(lm):
            continue
        idx = np.argwhere(lm)
        a[i][lm] = _pullback_link(chart, ut, center, grid, idx, i)
    st = EvolutionState.at_rest(grid, phi, a, ut.epsilon, ut.lam, "full3d")
    energy, _ = _energy(st)
    info = {"tube_distance": np.maximum(np.where(np.isfinite(rnu), rnu, dist) - r_pg, 0.0)
            .reshape(grid.dims)}
    mism = float(np.abs(np.angle(np.exp(1j * (q_tube - qtot.reshape(-1)))))[near & (rnu <= r_in)]
                 .max(initial=0.0))
    return InitialData(st, m, rho1, ut, report, energy, chart=chart, overlap_mismatch=mism,
                       tube_radius=r_pg, info=info)


_GL3 = [(-math.sqrt(0.6), 5 / 9), (0.0, 8 / 9), (math.sqrt(0.6), 5 / 9)]


def _pullback_link(chart, ut, center, grid, idx, axis):
    """Line integral of the pulled-back cross-section connection along links."""
    h = grid.spacing
    base = np.array(grid.origin) + idx * h
    step = np.zeros(3)
    step[axis] = h
    tot = np.zeros(len(idx))
    g2 = ut.grid
    for xk, wk in _GL3:
        p = base + 0.5 * (xk + 1) * step
        x4 = np.concatenate([np.zeros((len(p), 1)), p], axis=1)
        inv = chart_inverse(chart, x4, rho=np.inf)
        y = inv.y
        _, J = chart.forward(y, jacobian=True)
        dydx = np.linalg.inv(J)  # rows: dy^a / dx^mu
        pc = np.stack([y[:, 2] + center[0], y[:, 3] + center[1]], axis=1)
        A = []
        for i in range(2):
            coords = [(pc[:, k] - g2.origin[k]) / g2.spacing - (0.5 if k == i else 0.0)
                      for k in range(2)]
            A.append(map_coordinates(ut.a[i], coords, order=3, mode="nearest"))
        val = A[0] * dydx[:, 2, 1 + axis] + A[1] * dydx[:, 3, 1 + axis]
        tot += 0.5 * wk * val
    return tot


def assemble(chart, ut, q=None, grid=None, mode="axisymmetric", R0=None, report=None, rho1=None):
    """Dispatch on mode; ``q`` is accepted for interface symmetry and
    must agree with ut's exterior phase (it is recomputed internally)."""
    if mode == "axisymmetric":
        if R0 is None:
            R0 = chart.curve.L / (2 * math.pi)
        return assemble_axisymmetric(ut, R0, grid, report=report, rho1=rho1)
    return assemble_3d(chart, ut, grid, report=report, rho1=rho1)


def tube_winding(data, radius=None):
    """Winding of phi on a circle around the core point (axisymmetric)."""
    g = data.state.grid
    r = data.tube_radius if radius is None else radius
    loop = circle_loop(g, (data.R0, 0.0), r)
    return winding_degree(data.state.phi, loop).degree
