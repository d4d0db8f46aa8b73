"""Lattice discretization of the abelian Higgs model.

Fields live on a uniform grid.  The Higgs field ``phi`` is a complex
array on sites.  The gauge field ``a`` has shape ``(ndim, *dims)``:
``a[i][x]`` is the component A_i on the link from site x to x + e_i.
Link phases enter multiplicatively, U = exp(-i h A), so the covariant
difference (U phi(x+e) - phi(x)) / h is exactly gauge covariant and the
energy is exactly gauge invariant.

On non-periodic axes the link leaving the last site (and every
plaquette using it) is dropped; the arrays keep a uniform shape and the
dropped entries carry zero weight.
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

__all__ = [
    "Grid", "LatticeConfig2D", "WindingResult", "LatticeModel",
    "covariant_diff", "curvature", "current", "vorticity",
    "energy_density_2d", "total_energy_2d", "gauge_transform",
    "winding_degree", "circle_loop", "bogomolny_residual",
    "site_covariant_derivative", "plaquette_winding", "fsum",
]


def fsum(x):
    """Order-independent, correctly rounded sum of an array."""
    return math.fsum(np.ravel(x).tolist())


@dataclass(frozen=True)
class Grid:
    """Uniform grid.  Index (0, ..., 0) sits at ``origin``."""

    dims: tuple
    spacing: float
    origin: tuple = None
    periodic: tuple = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * len(dims))
        else:
            object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if self.periodic is None:
            object.__setattr__(self, "periodic", (False,) * len(dims))
        else:
            object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        if min(dims) < 4:
            raise ValueError("grid needs at least 4 sites per axis")
        if not (len(self.origin) == len(self.periodic) == len(dims)):
            raise ValueError("dims, origin and periodic must have equal length")

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def h(self):
        return self.spacing

    def axis(self, i):
        """Site coordinates along axis ``i``."""
        return self.origin[i] + self.spacing * np.arange(self.dims[i])

    def mesh(self):
        return np.meshgrid(*[self.axis(i) for i in range(self.ndim)], indexing="ij")

    @property
    def extent(self):
        return tuple((self.dims[i] - 1) * self.spacing for i in range(self.ndim))

    def link_mask(self, i):
        """True on links that exist (open axes lose the last one)."""
        m = np.ones(self.dims, dtype=bool)
        if not self.periodic[i]:
            idx = [slice(None)] * self.ndim
            idx[i] = -1
            m[tuple(idx)] = False
        return m

    def plaquette_mask(self, i, j):
        return self.link_mask(i) & self.link_mask(j)

    @classmethod
    def centered(cls, half_width, spacing, center=(0.0, 0.0), cell_centered=False):
        """Square 2D grid covering ``center +- half_width``.

        With ``cell_centered`` the center falls in the middle of a cell,
        otherwise on a site.
        """
        k = int(math.ceil(half_width / spacing))
        if cell_centered:
            n = 2 * k + 2
            off = (k + 0.5) * spacing
        else:
            n = 2 * k + 1
            off = k * spacing
        origin = tuple(c - off for c in center)
        return cls((n, n), spacing, origin)


def _fwd(x, axis):
    return np.roll(x, -1, axis=axis)


def _bwd(x, axis):
    return np.roll(x, 1, axis=axis)


def _check_shapes(phi, a):
    if a.shape[1:] != phi.shape or a.shape[0] != phi.ndim:
        raise ValueError("phi shape %s and gauge shape %s do not match"
                         % (phi.shape, a.shape))


@dataclass
class LatticeConfig2D:
    """Planar configuration U = (phi, A) with scale ``epsilon`` and coupling ``lam``.

    ``exterior`` optionally records an exact pure-gauge description
    ``(center, radius, phase)`` valid outside ``radius``: there phi equals
    exp(i phase(theta)).
    """

    grid: Grid
    phi: np.ndarray
    a: np.ndarray
    epsilon: float
    lam: float
    exterior: tuple = None
    resolution_guard: float = field(default=0.5, repr=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=complex)
        self.a = np.asarray(self.a, dtype=float)
        if self.grid.ndim != 2:
            raise ValueError("LatticeConfig2D needs a 2D grid")
        if self.phi.shape != self.grid.dims:
            raise ValueError("phi does not match the grid")
        _check_shapes(self.phi, self.a)
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.grid.spacing > self.resolution_guard * self.epsilon * (1 + 1e-12):
            raise ValueError("grid spacing %.4g exceeds %.3g*epsilon"
                             % (self.grid.spacing, self.resolution_guard))
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.a))):
            raise ValueError("non-finite field values")

    def copy(self, **changes):
        out = replace(self, phi=self.phi.copy(), a=self.a.copy())
        for k, v in changes.items():
            setattr(out, k, v)
        return out

    def model(self):
        return LatticeModel(self.grid, self.epsilon, self.lam)


# ---------------------------------------------------------------------------
# basic operators


def covariant_diff(phi, a, axis, grid):
    """Forward covariant difference on the links along ``axis``."""
    _check_shapes(phi, a)
    h = grid.spacing
    d = (np.exp(-1j * h * a[axis]) * _fwd(phi, axis) - phi) / h
    return np.where(grid.link_mask(axis), d, 0.0)


def _link_current(phi, a, axis, grid):
    h = grid.spacing
    j = np.imag(np.conj(phi) * np.exp(-1j * h * a[axis]) * _fwd(phi, axis)) / h
    return np.where(grid.link_mask(axis), j, 0.0)


def curvature(a, grid, pair=(0, 1)):
    """F_ij per plaquette, indexed by the plaquette's lower corner."""
    i, j = pair
    h = grid.spacing
    f = (a[i] + _fwd(a[j], i) - _fwd(a[i], j) - a[j]) / h
    return np.where(grid.plaquette_mask(i, j), f, 0.0)


def current(u):
    """Link current j_i = <i phi, D_i phi>, shape (2, *dims).

    phi is parallel-transported to the link midpoint, which gives the
    gauge-invariant form Im(conj(phi_x) U phi_{x+e}) / h.
    """
    return np.array([_link_current(u.phi, u.a, i, u.grid) for i in range(2)])


def vorticity(u):
    """omega = (curl(j + A)) / 2 per plaquette."""
    h = u.grid.spacing
    j = current(u)
    cj = (j[0] + _fwd(j[1], 0) - _fwd(j[0], 1) - j[1]) / h
    w = 0.5 * (cj + curvature(u.a, u.grid))
    return np.where(u.grid.plaquette_mask(0, 1), w, 0.0)


def plaquette_centers(grid):
    h = grid.spacing
    return [c + 0.5 * h for c in grid.mesh()]


def _to_sites_from_links(val, axis):
    return 0.5 * (val + _bwd(val, axis))


def _to_sites_from_plaquettes(val, i, j):
    return 0.25 * (val + _bwd(val, i) + _bwd(val, j) + _bwd(_bwd(val, i), j))


def energy_density_2d(u):
    """Site energy density e = |D1|^2/2 + |D2|^2/2 + eps^2 F^2/2 + V.

    Link and plaquette terms are averaged onto sites, so
    h^2 * sum(density) equals the lattice energy exactly.
    """
    return u.model().site_density(u.phi, u.a)


def total_energy_2d(u):
    return u.model().potential_energy(u.phi, u.a)


def gauge_transform(u, chi, max_step=math.pi):
    """Apply phi -> e^{i chi} phi, A -> A + grad(chi).

    ``chi`` must be a single-valued phase: forward differences larger
    than ``max_step`` indicate a branch cut and are rejected.
    """
    chi = np.asarray(chi, dtype=float)
    if not np.all(np.isfinite(chi)):
        raise ValueError("chi must be finite")
    grid = u.grid
    a = u.a.copy()
    for i in range(grid.ndim):
        d = _fwd(chi, i) - chi
        d = np.where(grid.link_mask(i), d, 0.0)
        if np.max(np.abs(d)) > max_step:
            raise ValueError("chi jumps by more than %.3g across a link; "
                             "multivalued gauge functions are not allowed" % max_step)
        a[i] += d / grid.spacing
    return u.copy(phi=np.exp(1j * chi) * u.phi, a=a)


# ---------------------------------------------------------------------------
# winding


@dataclass
class WindingResult:
    degree: int
    residual: float
    max_step: float

    @property
    def under_resolved(self):
        return self.residual > 0.25 or self.max_step > 0.5 * math.pi

    def __int__(self):
        return self.degree


def winding_degree(phi, loop):
    """Degree of phi/|phi| along a closed lattice path.

    ``loop`` is a sequence of site index tuples; the path closes from the
    last entry back to the first.  Principal-branch phase steps are
    summed, divided by 2 pi and rounded.  ``max_step`` is the largest
    single step; values near pi mean the loop is under-resolved.
    """
    idx = tuple(np.asarray(loop).T)
    vals = phi[idx]
    if np.any(np.abs(vals) == 0):
        raise ValueError("phi vanishes on the loop; degree undefined")
    steps = np.angle(np.roll(vals, -1) / vals)
    total = math.fsum(steps.tolist()) / (2 * math.pi)
    deg = int(round(total))
    res = WindingResult(deg, abs(total - deg), float(np.max(np.abs(steps))))
    if res.under_resolved:
        warnings.warn("winding loop under-resolved (residual %.3g, max step %.3g)"
                      % (res.residual, res.max_step))
    return res


def circle_loop(grid, center, radius, samples=None):
    """Closed site path approximating a circle (counter-clockwise)."""
    if samples is None:
        samples = max(64, int(16 * radius / grid.spacing))
    th = np.linspace(0, 2 * math.pi, samples, endpoint=False)
    pts = []
    for k in range(2):
        x = center[k] + radius * (np.cos(th) if k == 0 else np.sin(th))
        i = np.rint((x - grid.origin[k]) / grid.spacing).astype(int)
        if i.min() < 0 or i.max() >= grid.dims[k]:
            raise ValueError("loop leaves the grid")
        pts.append(i)
    pts = np.stack(pts, axis=1)
    keep = np.any(pts != np.roll(pts, 1, axis=0), axis=1)
    return pts[keep]


def plaquette_winding(phi, a, grid, pair=(0, 1)):
    """Gauge-invariant integer winding carried by each plaquette."""
    i, j = pair
    h = grid.spacing

    def step(p, q, aval):
        return np.angle(np.conj(p) * np.exp(-1j * h * aval) * q)

    p00 = phi
    p10 = _fwd(phi, i)
    p01 = _fwd(phi, j)
    p11 = _fwd(p10, j)
    s = (step(p00, p10, a[i]) + step(p10, p11, _fwd(a[j], i))
         - step(p01, p11, _fwd(a[i], j)) - step(p00, p01, a[j]))
    n = np.rint((s + h * h * curvature(a, grid, pair)) / (2 * math.pi)).astype(int)
    return np.where(grid.plaquette_mask(i, j), n, 0)


# ---------------------------------------------------------------------------
# Bogomol'nyi decomposition


def site_covariant_derivative(phi, a, axis, grid):
    """Centered covariant derivative at sites, (U phi_+ - U_-^* phi_-) / 2h."""
    h = grid.spacing
    up = np.exp(-1j * h * a[axis])
    d = (up * _fwd(phi, axis) - np.conj(_bwd(up, axis)) * _bwd(phi, axis)) / (2 * h)
    return d


def _interior_sites(grid):
    m = np.ones(grid.dims, dtype=bool)
    for i in range(grid.ndim):
        if not grid.periodic[i]:
            idx = [slice(None)] * grid.ndim
            idx[i] = 0
            m[tuple(idx)] = False
            idx[i] = -1
            m[tuple(idx)] = False
    return m


@dataclass
class BogomolnyResidual:
    gradient: np.ndarray
    curvature: np.ndarray
    potential: np.ndarray
    defect: np.ndarray
    interior: np.ndarray


def bogomolny_residual(u, sign=1):
    """Pointwise terms of the Bogomol'nyi decomposition.

    e = sign*omega + |(D1 + i sign D2)phi|^2/2
        + (eps F12 + sign(|phi|^2 - 1)/(2 eps))^2/2
        + (lam - 1)(|phi|^2 - 1)^2/(8 eps^2)
    All quantities are taken at sites; ``defect`` is the difference of
    the two sides and vanishes up to O(h^2).  Boundary sites are
    excluded through ``interior``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    g = u.grid
    eps, lam = u.epsilon, u.lam
    d1 = site_covariant_derivative(u.phi, u.a, 0, g)
    d2 = site_covariant_derivative(u.phi, u.a, 1, g)
    f = _to_sites_from_plaquettes(curvature(u.a, g), 0, 1)
    om = _to_sites_from_plaquettes(vorticity(u), 0, 1)
    m2 = np.abs(u.phi) ** 2 - 1
    r1 = 0.5 * np.abs(d1 + 1j * sign * d2) ** 2
    r2 = 0.5 * (eps * f + sign * m2 / (2 * eps)) ** 2
    r3 = (lam - 1) * m2 ** 2 / (8 * eps ** 2)
    e = energy_density_2d(u)
    inside = _interior_sites(g)
    defect = np.where(inside, e - (sign * om + r1 + r2 + r3), 0.0)
    r1, r2, r3 = (np.where(inside, r, 0.0) for r in (r1, r2, r3))
    return BogomolnyResidual(r1, r2, r3, defect, inside)


# ---------------------------------------------------------------------------
# weighted lattice energy and its gradient


class LatticeModel:
    """Weighted lattice energy of the abelian Higgs model.

    V = sum_links w_l |D phi|^2/2 + sum_plaq w_p eps^2 F^2/2
        + sum_sites w_s lam (|phi|^2 - 1)^2 / (8 eps^2)

    Weights default to the cell volume h^ndim and vanish on links and
    plaquettes that do not exist.  Other weights give reduced models,
    e.g. the axisymmetric measure 2 pi rho.
    """

    def __init__(self, grid, epsilon, lam, site_weight=None, link_weight=None,
                 plaquette_weight=None):
        self.grid = grid
        self.epsilon = float(epsilon)
        self.lam = float(lam)
        vol = grid.spacing ** grid.ndim
        nd = grid.ndim
        self.pairs = list(combinations(range(nd), 2))
        if site_weight is None:
            site_weight = np.full(grid.dims, vol)
        self.ws = np.asarray(site_weight, dtype=float)
        if link_weight is None:
            link_weight = [np.full(grid.dims, vol) for _ in range(nd)]
        self.wl = np.array([np.where(grid.link_mask(i), link_weight[i], 0.0)
                            for i in range(nd)])
        if plaquette_weight is None:
            plaquette_weight = {p: np.full(grid.dims, vol) for p in self.pairs}
        self.wp = {p: np.where(grid.plaquette_mask(*p), plaquette_weight[p], 0.0)
                   for p in self.pairs}

    # -- pieces -------------------------------------------------------------

    def link_d(self, phi, a):
        h = self.grid.spacing
        us = np.exp(-1j * h * a)
        d = np.array([(us[i] * _fwd(phi, i) - phi) / h for i in range(self.grid.ndim)])
        return us, d

    def curvatures(self, a):
        return {p: curvature(a, self.grid, p) for p in self.pairs}

    def energy_parts(self, phi, a):
        """Absolute energies per site, per link and per plaquette."""
        eps = self.epsilon
        _, d = self.link_d(phi, a)
        el = 0.5 * self.wl * np.abs(d) ** 2
        fs = self.curvatures(a)
        ep = {p: 0.5 * eps ** 2 * self.wp[p] * fs[p] ** 2 for p in self.pairs}
        es = self.ws * self.lam / (8 * eps ** 2) * (np.abs(phi) ** 2 - 1) ** 2
        return es, el, ep

    def potential_energy(self, phi, a):
        es, el, ep = self.energy_parts(phi, a)
        return fsum(es) + fsum(el) + math.fsum(fsum(v) for v in ep.values())

    def kinetic_parts(self, pi, e):
        ks = 0.5 * self.ws * np.abs(pi) ** 2
        kl = 0.5 * self.epsilon ** 2 * self.wl * e ** 2
        return ks, kl

    def kinetic_energy(self, pi, e):
        ks, kl = self.kinetic_parts(pi, e)
        return fsum(ks) + fsum(kl)

    def site_shares(self, phi, a, pi=None, e=None):
        """Energy attributed to each site.

        Each link gives half of its energy to both endpoints and each
        plaquette a quarter to its corners, so the shares sum exactly to
        the total.
        """
        es, el, ep = self.energy_parts(phi, a)
        if pi is not None:
            ks, kl = self.kinetic_parts(pi, e)
            es = es + ks
            el = el + kl
        out = es.copy()
        for i in range(self.grid.ndim):
            out += _to_sites_from_links(el[i], i)
        for (i, j), v in ep.items():
            out += _to_sites_from_plaquettes(v, i, j)
        return out

    def site_density(self, phi, a, pi=None, e=None):
        """Energy per unit (weighted) volume at each site."""
        s = self.site_shares(phi, a, pi, e)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.ws > 0, s / self.ws, 0.0)

    def gradient(self, phi, a):
        """Return (g_phi, g_a): g_phi = 2 dV/d conj(phi), g_a = dV/dA."""
        h = self.grid.spacing
        eps = self.epsilon
        us, d = self.link_d(phi, a)
        gphi = self.ws * self.lam / (2 * eps ** 2) * (np.abs(phi) ** 2 - 1) * phi
        ga = np.zeros_like(a)
        for i in range(self.grid.ndim):
            wd = self.wl[i] * d[i] / h
            gphi = gphi - wd + _bwd(np.conj(us[i]) * wd, i)
            # dV/dA_i on the link = -w * Im(conj(phi) U phi_+) / h
            ga[i] = -self.wl[i] * np.imag(np.conj(phi) * us[i] * _fwd(phi, i)) / h
        fs = self.curvatures(a)
        for (i, j) in self.pairs:
            t = eps ** 2 * self.wp[(i, j)] * fs[(i, j)] / h
            ga[i] += t - _bwd(t, j)
            ga[j] += _bwd(t, i) - t
        return gphi, ga

    def gauss(self, phi, a, pi, e):
        """Per-site Gauss residual eps^2 div(e) - <i phi, pi>."""
        h = self.grid.spacing
        flux = np.zeros(self.grid.dims)
        for i in range(self.grid.ndim):
            we = self.wl[i] * e[i]
            flux += (we - _bwd(we, i)) / h
        charge = np.real(1j * phi * np.conj(pi))
        with np.errstate(divide="ignore", invalid="ignore"):
            div = np.where(self.ws > 0, flux / self.ws, 0.0)
        return self.epsilon ** 2 * div - np.where(self.ws > 0, charge, 0.0)
