"""Planar vortices: equivariant profiles, lattice minimization, the
energy table, vorticity confinement and pure-gauge extension.

Lengths in profile objects are in units of epsilon.  Lattice objects
carry physical lengths; the profile at scale epsilon is
phi(y) = f(|y|/eps) e^{i n theta}, A = n a(|y|/eps) d theta.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates
from scipy.sparse.linalg import spsolve
from scipy.special import k0e, k1e

from .lattice import (Grid, LatticeConfig2D, LatticeModel, circle_loop, fsum,
                      plaquette_centers, vorticity, winding_degree)

__all__ = [
    "RadialProfile", "solve_profile", "profile_to_lattice", "superpose",
    "minimize2d", "MinimizeResult", "EnergyTable", "energy_table",
    "WeightFunction", "make_weight", "confinement", "CirclePhase",
    "extend_pure_gauge", "ExtensionReport", "boundary_energy",
]


# ---------------------------------------------------------------------------
# radial profiles


@dataclass
class RadialProfile:
    """phi = f(r) e^{i n theta}, A = n a(r) d theta with r in epsilon units."""

    n: int
    lam: float
    r: np.ndarray
    f: np.ndarray
    a: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        self._fs = CubicSpline(self.r, self.f)
        self._as = CubicSpline(self.r, self.a)

    @property
    def r_max(self):
        return float(self.r[-1])

    def f_at(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(r < self.r_max, self._fs(np.minimum(r, self.r_max)), 1.0)
        return np.clip(out, 0.0, 1.0)

    def a_at(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.r_max, self._as(np.minimum(r, self.r_max)), 1.0)

    def energy_density(self, r=None):
        """e(r) on the nodes (or at ``r``) for epsilon = 1."""
        if r is None:
            r = self.r
        r = np.maximum(np.asarray(r, dtype=float), 1e-9)
        n, lam = self.n, self.lam
        f, a = self._fs(r), self._as(r)
        fp, ap = self._fs(r, 1), self._as(r, 1)
        return (0.5 * fp ** 2 + 0.5 * n * n * (1 - a) ** 2 * f * f / r ** 2
                + 0.5 * (n * ap / r) ** 2 + lam / 8 * (f * f - 1) ** 2)

    def energy(self, r_cut=None):
        """2 pi int r e dr, by composite Gauss-Legendre on each cell."""
        x, w = np.polynomial.legendre.leggauss(4)
        edges = self.r if r_cut is None else self.r[self.r <= r_cut]
        lo, hi = edges[:-1], edges[1:]
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        pts = mid[:, None] + half[:, None] * x[None, :]
        vals = pts * self.energy_density(pts) * half[:, None] * w[None, :]
        return 2 * math.pi * fsum(vals)

    def second_moment(self):
        """2 pi int r^3 e dr (epsilon = 1)."""
        x, w = np.polynomial.legendre.leggauss(4)
        lo, hi = self.r[:-1], self.r[1:]
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        pts = mid[:, None] + half[:, None] * x[None, :]
        vals = pts ** 3 * self.energy_density(pts) * half[:, None] * w[None, :]
        return 2 * math.pi * fsum(vals)

    def bps_defects(self):
        """Max |f' - n(1-a)f/r| and max |n a'/r - (1-f^2)/2| (lambda = 1 equations)."""
        r = self.r[1:]
        f, a = self._fs(r), self._as(r)
        d1 = self._fs(r, 1) - abs(self.n) * (1 - a) * f / r
        d2 = abs(self.n) * self._as(r, 1) / r - 0.5 * (1 - f * f)
        return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "f", "a"])
            for row in zip(self.r, self.f, self.a):
                w.writerow(["%.17g" % v for v in row])


def _profile_residual(f, a, r, h, n, lam, robin_f, robin_a):
    """Residuals of the radial equations, with f(0) = a(0) = 0 implicit."""
    F = np.concatenate(([0.0], f))
    A = np.concatenate(([0.0], a))
    ri = r[1:-1]
    fc, ac = F[1:-1], A[1:-1]
    fpp = (F[2:] - 2 * fc + F[:-2]) / h ** 2
    fp = (F[2:] - F[:-2]) / (2 * h)
    app = (A[2:] - 2 * ac + A[:-2]) / h ** 2
    ap = (A[2:] - A[:-2]) / (2 * h)
    rf = fpp + fp / ri - n * n * (1 - ac) ** 2 * fc / ri ** 2 - lam / 2 * (fc * fc - 1) * fc
    ra = app - ap / ri + (1 - ac) * fc * fc
    fpN = (3 * F[-1] - 4 * F[-2] + F[-3]) / (2 * h)
    apN = (3 * A[-1] - 4 * A[-2] + A[-3]) / (2 * h)
    bf = fpN + robin_f * (F[-1] - 1)
    ba = apN + robin_a * (A[-1] - 1)
    return np.concatenate((rf, [bf], ra, [ba]))


def _profile_jacobian(f, a, r, h, n, lam, robin_f, robin_a):
    N = len(f)
    F = np.concatenate(([0.0], f))
    A = np.concatenate(([0.0], a))
    ri = r[1:-1]
    fc, ac = F[1:-1], A[1:-1]
    rows, cols, vals = [], [], []

    def put(rr, cc, vv):
        rows.append(rr)
        cols.append(cc)
        vals.append(vv)

    k = np.arange(N - 1)        # equation index == unknown index of node k+1
    lo = 1 / h ** 2 - 1 / (2 * h * ri)
    hi = 1 / h ** 2 + 1 / (2 * h * ri)
    # f equations: rows 0..N-2, f unknowns 0..N-1, a unknowns N..2N-1
    dfc = -2 / h ** 2 - n * n * (1 - ac) ** 2 / ri ** 2 - lam / 2 * (3 * fc * fc - 1)
    dac = 2 * n * n * (1 - ac) * fc / ri ** 2
    put(k, k, dfc)
    m = k >= 1
    put(k[m], k[m] - 1, lo[m])
    put(k, k + 1, hi)
    put(k, N + k, dac)
    # a equations: rows N..2N-2
    lo_a = 1 / h ** 2 + 1 / (2 * h * ri)
    hi_a = 1 / h ** 2 - 1 / (2 * h * ri)
    put(N + k, N + k, -2 / h ** 2 - fc * fc)
    put(N + k[m], N + k[m] - 1, lo_a[m])
    put(N + k, N + k + 1, hi_a)
    put(N + k, k, 2 * (1 - ac) * fc)
    # closures
    for off, rob in ((0, robin_f), (N, robin_a)):
        row = np.array([off + N - 1] * 3)
        put(row, np.array([off + N - 1, off + N - 2, off + N - 3]),
            np.array([3 / (2 * h) + rob, -4 / (2 * h), 1 / (2 * h)]))
    J = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(2 * N, 2 * N))
    return J


def solve_profile(n, lam, r_max=20.0, tol=1e-10, dr=0.01, max_iter=100):
    """Solve the equivariant vortex equations for winding ``n``.

    Second-order finite differences on a uniform radial grid with damped
    Newton.  At r_max, f - 1 and 1 - a are matched to the decaying
    Bessel solutions K0(sqrt(lam) r) and r K1(r) through Robin conditions.
    Negative ``n`` is solved as |n| (the profile functions agree).
    """
    if n == 0:
        raise ValueError("n = 0 has no vortex profile")
    if r_max < 10:
        raise ValueError("r_max must be at least 10 (epsilon units)")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    m = abs(int(n))
    N = int(round(r_max / dr))
    h = r_max / N
    r = h * np.arange(N + 1)
    sl = math.sqrt(lam)
    robin_f = sl * k1e(sl * r_max) / k0e(sl * r_max)
    robin_a = k0e(r_max) / k1e(r_max)
    core = 1.0 + 0.5 * m
    f = np.tanh(r[1:] / core) ** m
    a = np.tanh(r[1:] / (1.2 * core)) ** 2
    res = _profile_residual(f, a, r, h, m, lam, robin_f, robin_a)
    norm = np.max(np.abs(res))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise RuntimeError("profile solver did not converge: residual %.3g" % norm)
        J = _profile_jacobian(f, a, r, h, m, lam, robin_f, robin_a)
        step = spsolve(J.tocsc(), -res)
        t = 1.0
        while True:
            fn, an = f + t * step[:N], a + t * step[N:]
            rn = _profile_residual(fn, an, r, h, m, lam, robin_f, robin_a)
            nn = np.max(np.abs(rn))
            if nn < norm or t < 1e-4:
                break
            t *= 0.5
        f, a, res, norm = fn, an, rn, nn
        it += 1
    f = np.concatenate(([0.0], f))
    a = np.concatenate(([0.0], a))
    return RadialProfile(int(n), float(lam), r, f, a, float(norm), it)


# ---------------------------------------------------------------------------
# sampling on a lattice

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def _theta_link_integral(x0, y0, dx, dy, weight):
    """int weight(r) d theta along the segment (x0, y0) + s (dx, dy), s in [0, 1]."""
    tot = 0.0
    for xk, wk in zip(_GL_X, _GL_W):
        s = 0.5 * (xk + 1)
        x = x0 + s * dx
        y = y0 + s * dy
        r2 = x * x + y * y
        with np.errstate(divide="ignore", invalid="ignore"):
            dth = np.where(r2 > 0, (x * dy - y * dx) / r2, 0.0)
        tot = tot + 0.5 * wk * weight(np.sqrt(r2)) * dth
    return tot


def profile_to_lattice(p, grid, center=(0.0, 0.0), epsilon=1.0, min_cover=8.0,
                       resolution_guard=0.5):
    """Sample the equivariant vortex at scale ``epsilon`` on ``grid``.

    Site values are exact; each link carries the line integral of
    n a(r/eps) d theta (5-point Gauss) divided by the spacing.  The grid
    must cover ``center +- min_cover*epsilon``.
    """
    for k in range(2):
        lo = grid.origin[k]
        hi = lo + (grid.dims[k] - 1) * grid.spacing
        if center[k] - min_cover * epsilon < lo or center[k] + min_cover * epsilon > hi:
            raise ValueError("grid does not cover %.3g epsilon around the center"
                             % min_cover)
    x, y = grid.mesh()
    x = x - center[0]
    y = y - center[1]
    r = np.hypot(x, y)
    phi = p.f_at(r / epsilon) * np.exp(1j * p.n * np.arctan2(y, x))
    h = grid.spacing

    def weight(rr):
        return p.n * p.a_at(rr / epsilon)

    a = np.array([_theta_link_integral(x, y, h, 0.0, weight) / h,
                  _theta_link_integral(x, y, 0.0, h, weight) / h])
    a = np.where(np.array([grid.link_mask(0), grid.link_mask(1)]), a, 0.0)
    return LatticeConfig2D(grid, phi, a, epsilon, p.lam,
                           resolution_guard=resolution_guard)


def superpose(*configs):
    """Product of Higgs fields and sum of gauge fields on a common grid."""
    c0 = configs[0]
    phi = np.ones(c0.grid.dims, dtype=complex)
    a = np.zeros_like(c0.a)
    for c in configs:
        phi = phi * c.phi
        a = a + c.a
    return c0.copy(phi=phi, a=a)


# ---------------------------------------------------------------------------
# weight function and confinement


@dataclass
class WeightFunction:
    """f(r) = (1 - r^3/R^3)^2 on [0, R], zero beyond."""

    R: float
    C: float = field(init=False)

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        self.C = 6.0 / self.R ** 3

    def __call__(self, r):
        s = np.clip(np.asarray(r, dtype=float) / self.R, 0.0, 1.0)
        return (1 - s ** 3) ** 2

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        s = np.clip(r / self.R, 0.0, 1.0)
        return np.where(r < self.R, -6 * r ** 2 / self.R ** 3 * (1 - s ** 3), 0.0)

    def table(self, n=201):
        r = np.linspace(0, self.R, n)
        return r, self(r)


def make_weight(R):
    return WeightFunction(float(R))


def confinement(u, m, w, center=(0.0, 0.0)):
    """pi m - int f(|y - center|) omega over the disk of radius w.R."""
    g = u.grid
    for k in range(2):
        lo = g.origin[k]
        hi = lo + (g.dims[k] - 1) * g.spacing
        if center[k] - w.R < lo or center[k] + w.R > hi:
            raise ValueError("weight support leaves the grid")
    cx, cy = plaquette_centers(g)
    r = np.hypot(cx - center[0], cy - center[1])
    om = vorticity(u)
    return math.pi * m - g.spacing ** 2 * fsum(w(r) * om)


# ---------------------------------------------------------------------------
# pure-gauge extension


class CirclePhase:
    """q(theta) = n theta + p(theta) with p a periodic cubic spline."""

    def __init__(self, n, theta, values):
        self.n = int(n)
        th = np.append(theta, theta[0] + 2 * math.pi)
        vals = np.append(values, values[0])
        self._p = CubicSpline(th, vals, bc_type="periodic")
        self._t0 = float(theta[0])

    @classmethod
    def from_samples(cls, q):
        """Fit to unwrapped samples q(2 pi k / M), k = 0..M-1."""
        q = np.asarray(q, dtype=float)
        M = len(q)
        th = 2 * math.pi * np.arange(M) / M
        n = int(round((q[-1] + (q[-1] - q[-2]) - q[0]) / (2 * math.pi)))
        return cls(n, th, q - n * th)

    def _wrap(self, theta):
        return self._t0 + np.mod(np.asarray(theta, dtype=float) - self._t0, 2 * math.pi)

    def periodic_part(self, theta):
        return self._p(self._wrap(theta))

    def __call__(self, theta):
        return self.n * np.asarray(theta, dtype=float) + self.periodic_part(theta)

    def derivative(self, theta):
        return self.n + self._p(self._wrap(theta), 1)


def _site_interp(field_, grid, pts, order=1):
    """Interpolate a site array at physical points (N, 2)."""
    coords = [(pts[:, k] - grid.origin[k]) / grid.spacing for k in range(2)]
    if np.iscomplexobj(field_):
        return (map_coordinates(field_.real, coords, order=order, mode="nearest")
                + 1j * map_coordinates(field_.imag, coords, order=order, mode="nearest"))
    return map_coordinates(field_, coords, order=order, mode="nearest")


def _link_interp(field_, axis, grid, pts):
    coords = [(pts[:, k] - grid.origin[k]) / grid.spacing - (0.5 if k == axis else 0.0)
              for k in range(2)]
    return map_coordinates(field_, coords, order=1, mode="nearest")


def _covariant_velocity(u):
    """Gauge-invariant phase velocity arg(conj(phi) U phi_+)/h on the links."""
    h = u.grid.spacing
    out = []
    for i in range(2):
        z = np.conj(u.phi) * np.exp(-1j * h * u.a[i]) * np.roll(u.phi, -1, i)
        out.append(np.where(np.abs(z) > 0, np.angle(z), 0.0) / h)
    return out


@dataclass
class ExtensionReport:
    s: float
    annulus_energy: float
    boundary_energy: float
    inner_energy: float
    winding: int


def boundary_energy(u, center, s, samples=None):
    """int over the circle |y - center| = s of the energy density, d(arclength)."""
    if samples is None:
        samples = max(256, int(8 * 2 * math.pi * s / u.grid.spacing))
    th = 2 * math.pi * np.arange(samples) / samples
    pts = np.stack([center[0] + s * np.cos(th), center[1] + s * np.sin(th)], axis=1)
    e = u.model().site_density(u.phi, u.a)
    vals = _site_interp(e, u.grid, pts)
    return 2 * math.pi * s * fsum(vals) / samples


def _aligned_grid(u, center, half_width):
    g = u.grid
    h = g.spacing
    lo = [int(math.floor((center[k] - half_width - g.origin[k]) / h)) for k in range(2)]
    hi = [int(math.ceil((center[k] + half_width - g.origin[k]) / h)) for k in range(2)]
    dims = tuple(hi[k] - lo[k] + 1 for k in range(2))
    origin = tuple(g.origin[k] + lo[k] * h for k in range(2))
    return Grid(dims, h, origin)


def extend_pure_gauge(u, s, center=(0.0, 0.0), grid=None, phase=None, samples=None,
                      width=None, return_report=False):
    """Replace u outside the disk B(s) by a pure-gauge extension.

    Inside B(s) the result equals u.  On the circle we record the
    modulus rho(theta), the phase q(theta) and the covariant angular
    velocity v(theta).  For s < r < s + width (default width = epsilon)
    the modulus ramps linearly from rho to 1 and the angular connection
    from q' - v to q'; the radial connection vanishes.  Beyond s + width
    the field is exactly phi = e^{iq}, with link values equal to phase
    differences, so the lattice energy there is zero.

    ``grid`` must be aligned with u's grid; the default is a square grid
    around ``center`` reaching s + width + 4h.  ``phase`` overrides the
    measured phase with a callable having ``derivative`` and
    ``periodic_part`` (for instance a CirclePhase).
    """
    g = u.grid
    h = g.spacing
    eps = u.epsilon
    if width is None:
        width = eps
    if samples is None:
        samples = 2 * max(128, int(4 * 2 * math.pi * s / h))
    th = 2 * math.pi * np.arange(samples) / samples
    ring = np.stack([center[0] + s * np.cos(th), center[1] + s * np.sin(th)], axis=1)
    for k in range(2):
        lo = g.origin[k] + h
        hi = g.origin[k] + (g.dims[k] - 2) * h
        if ring[:, k].min() < lo or ring[:, k].max() > hi:
            raise ValueError("circle of radius s is not inside the grid")
    rho = _site_interp(np.abs(u.phi), g, ring)
    if rho.min() < 0.5:
        raise ValueError("|phi| < 1/2 on the circle (min %.3g); extension invalid"
                         % rho.min())
    if phase is None:
        z = _site_interp(u.phi, g, ring)
        q = CirclePhase.from_samples(np.unwrap(np.angle(z)))
    else:
        q = phase
    vel = _covariant_velocity(u)
    v1 = _link_interp(vel[0], 0, g, ring)
    v2 = _link_interp(vel[1], 1, g, ring)
    v_theta = s * (-np.sin(th) * v1 + np.cos(th) * v2)
    rho_s = CirclePhase.from_samples(rho)
    v_s = CirclePhase.from_samples(v_theta)

    if grid is None:
        grid = _aligned_grid(u, center, s + width + 4 * h)
    off = [(grid.origin[k] - g.origin[k]) / h for k in range(2)]
    shift = [int(round(o)) for o in off]
    if any(abs(o - sft) > 1e-9 for o, sft in zip(off, shift)) or grid.spacing != h:
        raise ValueError("target grid is not aligned with the input grid")

    x, y = grid.mesh()
    X, Y = x - center[0], y - center[1]
    r = np.hypot(X, Y)
    theta = np.arctan2(Y, X)
    inside = r <= s
    # source indices for the inside copy
    ii = np.arange(grid.dims[0])[:, None] + shift[0] + 0 * np.arange(grid.dims[1])[None, :]
    jj = np.arange(grid.dims[1])[None, :] + shift[1] + 0 * np.arange(grid.dims[0])[:, None]
    valid_src = (ii >= 0) & (ii < g.dims[0]) & (jj >= 0) & (jj < g.dims[1])
    if np.any(inside & ~valid_src):
        raise ValueError("B(s) is not covered by the input grid")
    ic = np.clip(ii, 0, g.dims[0] - 1)
    jc = np.clip(jj, 0, g.dims[1] - 1)

    t = np.clip((r - s) / width, 0.0, 1.0)
    rr = rho_s.periodic_part(theta)
    phi = np.where(inside, u.phi[ic, jc], (rr + t * (1 - rr)) * np.exp(1j * q(theta)))

    def ramp_integral(x0, y0, dx, dy):
        tot = 0.0
        for xk, wk in zip(_GL_X, _GL_W):
            sk = 0.5 * (xk + 1)
            px, py = x0 + sk * dx, y0 + sk * dy
            r2 = px * px + py * py
            tk = np.clip((np.sqrt(r2) - s) / width, 0.0, 1.0)
            dth = (px * dy - py * dx) / r2
            tot = tot + 0.5 * wk * (1 - tk) * v_s.periodic_part(np.arctan2(py, px)) * dth
        return tot

    a = np.zeros((2,) + grid.dims)
    for i, (dx, dy) in enumerate(((h, 0.0), (0.0, h))):
        Xb, Yb = X + dx, Y + dy
        rb = np.hypot(Xb, Yb)
        thb = np.arctan2(Yb, Xb)
        b_inside = rb <= s
        dth = np.angle(np.exp(1j * (thb - theta)))
        dq = q.n * dth + q.periodic_part(thb) - q.periodic_part(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = (dq - ramp_integral(X, Y, dx, dy)) / h
        # links with both ends inside: copy
        copy = u.a[i][ic, jc]
        # links crossing the circle: match the covariant phase step of u
        ib = np.clip(ic + (1 if i == 0 else 0), 0, g.dims[0] - 1)
        jb = np.clip(jc + (1 if i == 1 else 0), 0, g.dims[1] - 1)
        phib = np.roll(phi, -1, i)
        src_ok = valid_src & (ic + (1 if i == 0 else 0) < g.dims[0]) & \
            (jc + (1 if i == 1 else 0) < g.dims[1])
        vstep = np.angle(np.conj(u.phi[ic, jc]) * np.exp(-1j * h * u.a[i][ic, jc])
                         * u.phi[ib, jb])
        tb = np.clip((rb - s) / width, 0.0, 1.0)
        ta = np.clip((r - s) / width, 0.0, 1.0)
        cross_step = np.angle(phib) - np.angle(phi) - (1 - np.maximum(ta, tb)) * vstep
        base = np.where(src_ok, copy, outer)
        cross = inside ^ b_inside
        wrapped = np.angle(np.exp(1j * cross_step))
        # choose the 2 pi branch closest to the smooth extension
        k2 = np.rint((outer * h - wrapped) / (2 * math.pi))
        cross_val = (wrapped + 2 * math.pi * k2) / h
        val = np.where(inside & b_inside, base, np.where(cross & src_ok, cross_val, outer))
        a[i] = np.where(grid.link_mask(i), val, 0.0)

    out = LatticeConfig2D(grid, phi, a, eps, u.lam, exterior=(tuple(center), s + width, q),
                          resolution_guard=u.resolution_guard)
    if not return_report:
        return out
    m = out.model()
    shares = m.site_shares(out.phi, out.a)
    ann = fsum(shares[~inside])
    loop = circle_loop(grid, center, s + width + 2 * h) if \
        s + width + 2 * h < min(grid.extent) / 2 else None
    wnd = winding_degree(out.phi, loop).degree if loop is not None else q.n
    rep = ExtensionReport(s, ann, boundary_energy(u, center, s), fsum(shares[inside]), wnd)
    return out, rep


# ---------------------------------------------------------------------------
# minimization


@dataclass
class MinimizeResult:
    config: LatticeConfig2D
    energy: float
    seed_energy: float
    grad_norm: float
    iterations: int
    converged: bool


def _frozen_mask(grid, layers):
    m = np.zeros(grid.dims, dtype=bool)
    m[:layers, :] = m[-layers:, :] = True
    m[:, :layers] = m[:, -layers:] = True
    return m


def minimize2d(n, lam, grid, seed="equivariant", epsilon=1.0, tol=1e-7, max_iter=40000,
               center=None, frozen_layers=2, check_every=500, return_result=False,
               boundary_radius=None):
    """Minimize the lattice energy in the winding-n class.

    Nesterov-accelerated gradient descent with adaptive restart.  The
    outer ``frozen_layers`` of sites (and links between them) are held
    fixed; with an equivariant seed the seed is first made exactly pure
    gauge near the boundary by ``extend_pure_gauge``.  The winding on a
    loop inside the frozen ring is checked every ``check_every`` steps.
    """
    if center is None:
        center = tuple(grid.origin[k] + 0.5 * (grid.dims[k] - 1) * grid.spacing
                       for k in range(2))
    h = grid.spacing
    half = 0.5 * min(grid.extent)
    if isinstance(seed, str):
        if seed != "equivariant":
            raise ValueError("unknown seed %r" % seed)
        p = solve_profile(n, lam)
        u0 = profile_to_lattice(p, grid, center, epsilon, min_cover=min(8.0, 0.9 * half / epsilon))
    else:
        u0 = seed
        if u0.grid != grid:
            raise ValueError("seed lives on a different grid")
    if boundary_radius is None:
        boundary_radius = half - (frozen_layers + 2) * h - epsilon
    if boundary_radius > 4 * epsilon:
        try:
            u0 = extend_pure_gauge(u0, boundary_radius, center, grid=grid)
        except ValueError:
            pass
    loop = circle_loop(grid, center, half - (frozen_layers + 1) * h)
    w0 = winding_degree(u0.phi, loop).degree
    if w0 != n:
        raise ValueError("seed has winding %d on the boundary loop, expected %d" % (w0, n))

    model = LatticeModel(grid, epsilon, lam)
    frozen = _frozen_mask(grid, frozen_layers)
    free_phi = ~frozen
    free_a = np.array([~(frozen & np.roll(frozen, -1, i)) & grid.link_mask(i)
                       for i in range(2)])
    vol = h * h
    lip_phi = (8.0 / h ** 2 + 2.0 * lam / epsilon ** 2)
    lip_a = (8.0 * epsilon ** 2 / h ** 2 + 2.0)
    sp = 1.0 / lip_phi / vol
    sa = 1.0 / lip_a / vol

    phi, a = u0.phi.copy(), u0.a.copy()
    e_seed = model.potential_energy(phi, a)
    yp, ya = phi.copy(), a.copy()
    e_prev = e_seed
    k = 0
    gnorm = np.inf
    converged = False
    for it in range(1, max_iter + 1):
        gp, ga = model.gradient(yp, ya)
        gp = np.where(free_phi, gp, 0.0)
        ga = np.where(free_a, ga, 0.0)
        new_phi = yp - sp * gp
        new_a = ya - sa * ga
        e_new = model.potential_energy(new_phi, new_a)
        if e_new > e_prev:
            # adaptive restart: drop momentum
            k = 0
            yp, ya = phi.copy(), a.copy()
            gp, ga = model.gradient(yp, ya)
            gp = np.where(free_phi, gp, 0.0)
            ga = np.where(free_a, ga, 0.0)
            new_phi = yp - sp * gp
            new_a = ya - sa * ga
            e_new = model.potential_energy(new_phi, new_a)
        gnorm = math.sqrt((fsum(np.abs(gp) ** 2) + fsum(ga ** 2)) / vol)
        k += 1
        beta = (k - 1) / (k + 2)
        yp = new_phi + beta * (new_phi - phi)
        ya = new_a + beta * (new_a - a)
        phi, a, e_prev = new_phi, new_a, e_new
        if it % check_every == 0:
            w = winding_degree(phi, loop).degree
            if w != n:
                raise RuntimeError("winding changed to %d at step %d (vortex escaped)" % (w, it))
        if gnorm < tol:
            converged = True
            break
    w = winding_degree(phi, loop).degree
    if w != n:
        raise RuntimeError("winding changed to %d at step %d (vortex escaped)" % (w, it))
    out = u0.copy(phi=phi, a=a)
    if return_result:
        return MinimizeResult(out, e_prev, e_seed, gnorm, it, converged)
    return out


# ---------------------------------------------------------------------------
# energy table


@dataclass
class EnergyTable:
    lam: float
    n: list
    energy: list
    error: list
    grid_h: float
    grid_extent: float
    residual: list

    def value(self, n):
        return self.energy[self.n.index(abs(int(n)))] if n != 0 else 0.0

    def splitting_minimum(self, N, max_parts=None):
        """Cheapest sum of table energies over splittings of N.

        At least two parts must be nonzero; parts are limited to
        |n_j| <= n_max and the energies use E_{-n} = E_n.
        """
        nmax = max(self.n)
        if max_parts is None:
            max_parts = abs(N) + 2
        parts = [k for k in range(-nmax, nmax + 1) if k != 0]
        span = max_parts * nmax
        INF = float("inf")
        # best[c][s]: cheapest total for exactly c nonzero parts summing to s
        best = {s: self.value(s) for s in parts}
        out = INF
        for c in range(2, max_parts + 1):
            nxt = {}
            for s0, e0 in best.items():
                for p in parts:
                    s1 = s0 + p
                    if abs(s1) > span:
                        continue
                    e1 = e0 + self.value(p)
                    if e1 < nxt.get(s1, INF):
                        nxt[s1] = e1
            best = nxt
            out = min(out, best.get(N, INF))
        return out

    def criterion_margin(self, N):
        """min over splittings minus E_N (positive means the class is stable)."""
        return self.splitting_minimum(N) - self.value(N)

    def is_monotone(self):
        e, err = np.array(self.energy), np.array(self.error)
        return bool(np.all(np.diff(e) > err[1:] + err[:-1]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "lambda", "energy", "grid_h", "grid_extent", "residual"])
            for n, e, res in zip(self.n, self.energy, self.residual):
                w.writerow([n, "%.17g" % self.lam, "%.17g" % e, "%.17g" % self.grid_h,
                            "%.17g" % self.grid_extent, "%.6g" % res])


def energy_table(lam, n_max=3, h=0.25, half_width=None, tol=1e-6, max_n=5, **kw):
    """Lattice minimal energies E_n for 1 <= n <= n_max (epsilon = 1).

    The error bar is the Richardson estimate |E(h) - E(2h)|/3 plus the
    energy change of a further solver tolerance decade.
    """
    if n_max > max_n:
        raise ValueError("n_max above the cost guard %d" % max_n)
    ns, es, errs, res = [], [], [], []
    for n in range(1, n_max + 1):
        hw = half_width if half_width is not None else 10.0 + 2.0 * n
        vals = []
        for hh in (h, 2 * h):
            grid = Grid.centered(hw, hh)
            r = minimize2d(n, lam, grid, tol=tol, return_result=True, **kw)
            vals.append(r)
        ns.append(n)
        es.append(vals[0].energy)
        errs.append(abs(vals[0].energy - vals[1].energy) / 3)
        res.append(vals[0].grad_norm)
    hw = half_width if half_width is not None else 10.0 + 2.0 * n_max
    return EnergyTable(float(lam), ns, es, errs, h, 2 * hw, res)
