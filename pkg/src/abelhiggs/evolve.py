"""Temporal-gauge evolution of the abelian Higgs equations on a lattice.

The equations of motion are Hamilton's equations of the weighted lattice
energy (see ``LatticeModel``):

    w_s d^2 phi / dt^2 = -g_phi,    eps^2 w_l d^2 A / dt^2 = -g_A,

integrated by velocity Verlet.  Three geometries share this code:

* ``planar``: a 2D grid, i.e. a straight string translation invariant
  along its axis;
* ``axisymmetric``: the (rho, z) half-plane with sites at
  rho_i = (i + 1/2) h and weights 2 pi rho, so that the link crossing the
  axis has zero weight and regularity at rho = 0 is automatic;
* ``full3d``: a 3D grid.

The outer boundary layers are frozen at their initial values.  For data
that is exactly pure gauge there, this is exact until the light cone of
the string region reaches the boundary.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .lattice import Grid, LatticeModel, fsum

__all__ = ["EvolutionState", "Evolver", "axisymmetric_grid", "gauss_residual", "total_energy",
           "state_distance", "MODES"]

MODES = ("planar", "axisymmetric", "full3d")


def axisymmetric_grid(rho_max, z_half, spacing):
    """(rho, z) grid with rho_i = (i + 1/2) h and z symmetric about 0.

    z sites sit at half-integer multiples of h, so z = 0 falls in the
    middle of a cell.
    """
    nr = int(math.ceil(rho_max / spacing - 0.5)) + 1
    kz = int(math.ceil(z_half / spacing))
    nz = 2 * kz
    return Grid((nr, nz), spacing, (0.5 * spacing, -(kz - 0.5) * spacing))


def axisymmetric_weights(grid):
    h = grid.spacing
    rho = grid.origin[0] + h * np.arange(grid.dims[0])
    if abs(grid.origin[0] - 0.5 * h) > 1e-12 * h:
        raise ValueError("axisymmetric grids need rho_0 = h/2")
    one = np.ones(grid.dims[1])
    site = 2 * math.pi * np.outer(rho, one) * h * h
    half = 2 * math.pi * np.outer(rho + 0.5 * h, one) * h * h
    return site, [half, site], {(0, 1): half}


@dataclass
class EvolutionState:
    grid: Grid
    phi: np.ndarray
    pi: np.ndarray
    a: np.ndarray
    e: np.ndarray
    epsilon: float
    lam: float
    mode: str = "planar"
    t: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError("mode must be one of %s" % (MODES,))
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        nd = 3 if self.mode == "full3d" else 2
        if self.grid.ndim != nd:
            raise ValueError("mode %s needs a %dD grid" % (self.mode, nd))
        self.phi = np.asarray(self.phi, dtype=complex)
        self.pi = np.asarray(self.pi, dtype=complex)
        self.a = np.asarray(self.a, dtype=float)
        self.e = np.asarray(self.e, dtype=float)
        for arr in (self.phi, self.pi, self.a, self.e):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite field values")

    def copy(self, **changes):
        base = dict(phi=self.phi.copy(), pi=self.pi.copy(), a=self.a.copy(), e=self.e.copy())
        base.update(changes)
        return replace(self, **base)

    def model(self):
        if self.mode == "axisymmetric":
            s, l, p = axisymmetric_weights(self.grid)
            return LatticeModel(self.grid, self.epsilon, self.lam, s, l, p)
        return LatticeModel(self.grid, self.epsilon, self.lam)

    @classmethod
    def at_rest(cls, grid, phi, a, epsilon, lam, mode="planar"):
        return cls(grid, phi, np.zeros_like(phi, dtype=complex), a, np.zeros_like(a),
                   epsilon, lam, mode)


@dataclass
class MonitorRecord:
    t: float
    energy: float
    gauss_l2: float
    gauss_max: float
    silent_change: float


class Evolver:
    """Velocity-Verlet integrator with frozen boundary layers.

    ``distance`` (optional, per site) is the distance from the region
    where the initial data differs from a static solution; sites with
    distance > t + ``margin`` are analytically silent and are monitored.
    """

    def __init__(self, state, dt, cfl=0.5, frozen_layers=2, distance=None, margin=None):
        h = state.grid.spacing
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt > cfl * h * (1 + 1e-12):
            raise ValueError("CFL violation: dt = %.4g > %.3g h" % (dt, cfl))
        self.dt = float(dt)
        self.cfl = cfl
        self.mode = state.mode
        self.grid = state.grid
        self.model = state.model()
        self.layers = int(frozen_layers)
        self._masks()
        self.distance = distance
        self.margin = 4 * state.epsilon if margin is None else margin
        self.phi0 = state.phi.copy()
        self.a0 = state.a.copy()
        self._acc = None
        self._acc_src = None
        self.history = []
        self.silent_max = 0.0

    def _masks(self):
        g = self.grid
        fs = np.zeros(g.dims, dtype=bool)
        L = self.layers
        for ax in range(g.ndim):
            if g.periodic[ax]:
                continue
            idx = [slice(None)] * g.ndim
            if not (self.mode == "axisymmetric" and ax == 0):
                idx[ax] = slice(0, L)
                fs[tuple(idx)] = True
            idx[ax] = slice(g.dims[ax] - L, None)
            fs[tuple(idx)] = True
        self.frozen_sites = fs
        fl = []
        for ax in range(g.ndim):
            fl.append(fs | np.roll(fs, -1, ax) | (self.model.wl[ax] == 0))
        self.frozen_links = np.array(fl)
        self.free_sites = ~fs & (self.model.ws > 0)
        self.free_links = ~self.frozen_links

    # -- physics ------------------------------------------------------------

    def accelerations(self, phi, a):
        m = self.model
        gphi, ga = m.gradient(phi, a)
        with np.errstate(divide="ignore", invalid="ignore"):
            aphi = np.where(self.free_sites, -gphi / m.ws, 0.0)
            aa = np.where(self.free_links, -ga / (m.epsilon ** 2 * m.wl), 0.0)
        return aphi, aa

    def rhs(self, state):
        return self.accelerations(state.phi, state.a)

    def step(self, state, dt=None):
        """One velocity-Verlet step; returns a new state."""
        dt = self.dt if dt is None else dt
        if dt > self.cfl * self.grid.spacing * (1 + 1e-12):
            raise ValueError("CFL violation: dt = %.4g > %.3g h" % (dt, self.cfl))
        src = self._acc_src
        if src is not None and src[0] is state.phi and src[1] is state.a:
            aphi, aa = self._acc
        else:
            aphi, aa = self.accelerations(state.phi, state.a)
        pi = state.pi + 0.5 * dt * aphi
        e = state.e + 0.5 * dt * aa
        phi = state.phi + dt * pi
        a = state.a + dt * e
        aphi, aa = self.accelerations(phi, a)
        pi = pi + 0.5 * dt * aphi
        e = e + 0.5 * dt * aa
        new = replace(state, phi=phi, pi=pi, a=a, e=e, t=state.t + dt)
        self._acc = (aphi, aa)
        self._acc_src = (phi, a)
        return new

    def run(self, state, steps, callback=None, monitor_every=1):
        for k in range(steps):
            state = self.step(state)
            if monitor_every and (k + 1) % monitor_every == 0:
                self.monitor(state)
            if callback is not None:
                callback(state, k + 1)
        return state

    # -- monitors -----------------------------------------------------------

    def gauss_residual(self, state):
        return gauss_residual(state, self.model)

    def total_energy(self, state):
        return total_energy(state, self.model)

    def silent_change(self, state):
        if self.distance is None:
            return 0.0
        sil = self.distance > state.t + self.margin
        if not np.any(sil):
            return 0.0
        d = np.abs(state.phi - self.phi0)[sil].max()
        for i in range(self.grid.ndim):
            d = max(d, np.abs(state.a[i] - self.a0[i])[sil & ~self.frozen_links[i]].max(initial=0.0))
        return float(d)

    def monitor(self, state):
        g, l2, mx = self.gauss_residual(state)
        e, _ = self.total_energy(state)
        sc = self.silent_change(state)
        self.silent_max = max(self.silent_max, sc)
        rec = MonitorRecord(state.t, e, l2, mx, sc)
        self.history.append(rec)
        return rec

    def check_box(self, T_run):
        """Precondition: the frozen boundary stays outside the light cone."""
        if self.distance is None:
            return
        dmin = self.distance[self.frozen_sites].min()
        if dmin < T_run + self.margin:
            raise ValueError("box too small: boundary at distance %.4g from the string "
                             "region, need > T_run + margin = %.4g" % (dmin, T_run + self.margin))

    # -- symmetry -----------------------------------------------------------

    def time_reverse(self, state):
        return replace(state, pi=-state.pi, e=-state.e)


def gauss_residual(state, model=None):
    """Per-site eps^2 div(e) - <i phi, pi>, and its weighted L2 and max norms."""
    m = state.model() if model is None else model
    g = m.gauss(state.phi, state.a, state.pi, state.e)
    mask = m.ws > 0
    l2 = math.sqrt(fsum(m.ws[mask] * g[mask] ** 2))
    return g, l2, float(np.abs(g[mask]).max(initial=0.0))


def total_energy(state, model=None):
    """Total energy (kinetic plus potential) and its per-site density."""
    m = state.model() if model is None else model
    shares = m.site_shares(state.phi, state.a, state.pi, state.e)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(m.ws > 0, shares / m.ws, 0.0)
    return fsum(shares), dens


def state_distance(a, b):
    """Relative L2 distance of two states over all fields (phi, pi, A, e)."""
    num = den = 0.0
    for f in ("phi", "pi", "a", "e"):
        x, y = getattr(a, f), getattr(b, f)
        num += float(np.sum(np.abs(x - y) ** 2))
        den += float(np.sum(np.abs(y) ** 2))
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


def manifest(state, evolver, extra=None):
    d = {
        "mode": state.mode, "epsilon": state.epsilon, "lambda": state.lam,
        "grid": {"dims": list(state.grid.dims), "spacing": state.grid.spacing,
                 "origin": list(state.grid.origin)},
        "dt": evolver.dt, "frozen_layers": evolver.layers, "t": state.t,
        "silent_max": evolver.silent_max,
    }
    if extra:
        d.update(extra)
    return json.dumps(d, indent=2, sort_keys=True)
