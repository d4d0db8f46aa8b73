"""Diagnostics: energies in normal coordinates, confinement, core tracking.

Lab data are reduced to gauge-invariant site fields (bilinears of the
covariant derivatives, the current j, the field strength F and the
vorticity 2-form (dj + F)/2), interpolated in space by cubic splines and
in time by cubic Lagrange polynomials through stored snapshots, and then
pulled back through the normal chart:

    M_ab = <D_a phi, D_b phi> = dpsi^mu_a dpsi^nu_b M_mu nu,  etc.

Everything reported is therefore exactly invariant under lattice gauge
transformations of the stored states.
"""

import csv
import io
import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from .lattice import fsum
from .vortex2d import WeightFunction
from .worldsheet import chart_inverse

__all__ = [
    "SnapshotStore", "LabSampler", "CrossSection", "DiagnosticsRecord",
    "cross_section_grid", "pullback_cross_sections", "zeta", "exterior_energy",
    "weighted_tube_energy", "track_cores", "compare_nambu_goto", "profile_comparison",
    "reference_cross_section", "flat_invariants", "records_csv", "svg_plot",
    "CSV_COLUMNS",
]

# lab field indices (cylindrical or cartesian components, time first)
_FIELDS = ("P", "M", "F", "J", "W")


# ---------------------------------------------------------------------------
# invariant site fields


def _fwd(x, ax):
    return np.roll(x, -1, ax)


def _bwd(x, ax):
    return np.roll(x, 1, ax)


def _mid_to_site(v, ax, order):
    """Values at x + h/2 e_ax interpolated to the site x."""
    if order == 2:
        return 0.5 * (v + _bwd(v, ax))
    return (9 * (v + _bwd(v, ax)) - (_fwd(v, ax) + _bwd(_bwd(v, ax), ax))) / 16


def invariant_fields(phi, pi, a, e, h, order=4):
    """Gauge-invariant site fields of a lattice state (any dimension d).

    Returns a dict with arrays indexed by spacetime components
    0 (time) and 1..d (space):
      P: |phi|^2
      M: (d+1, d+1, ...) <D_mu phi, D_nu phi>
      F: (d+1, d+1, ...) field strength, F_0i = e_i
      J: (d+1, ...) current <i phi, D_mu phi>
      W: (d+1, d+1, ...) vorticity 2-form (dj + F) / 2
    With ``order=4`` the site covariant derivative is the Richardson
    combination of the centered differences over h and 2h, link and
    plaquette values are moved to sites by 4-point interpolation and the
    plaquette curvature is corrected from a cell average to a point value.
    W uses second-order link differences of j in both cases; it only
    enters the confinement functional.  Sites within two cells of an edge
    are polluted by the periodic wrap and must be excluded by the caller.
    """
    d = phi.ndim
    n = d + 1
    U = np.exp(-1j * h * a)
    D = [pi]
    for i in range(d):
        Ub = np.conj(_bwd(U[i], i))
        d1 = (U[i] * _fwd(phi, i) - Ub * _bwd(phi, i)) / (2 * h)
        if order == 4:
            d2 = (U[i] * _fwd(U[i], i) * _fwd(_fwd(phi, i), i)
                  - Ub * np.conj(_bwd(_bwd(U[i], i), i)) * _bwd(_bwd(phi, i), i)) / (4 * h)
            d1 = (4 * d1 - d2) / 3
        D.append(d1)
    M = np.empty((n, n) + phi.shape)
    for mu in range(n):
        for nu in range(mu, n):
            M[mu, nu] = M[nu, mu] = np.real(D[mu] * np.conj(D[nu]))
    # link quantities
    z = [np.conj(phi) * U[i] * _fwd(phi, i) for i in range(d)]
    jl = [np.imag(zi) / h for zi in z]
    jdot = []
    for i in range(d):
        zd = (np.conj(pi) * U[i] * _fwd(phi, i) + np.conj(phi) * U[i] * _fwd(pi, i)
              - 1j * h * e[i] * z[i])
        jdot.append(np.imag(zd) / h)
    jt = np.imag(np.conj(phi) * pi)
    F = np.zeros((n, n) + phi.shape)
    W = np.zeros((n, n) + phi.shape)
    for i in range(d):
        F[0, i + 1] = _mid_to_site(e[i], i, order)
        F[i + 1, 0] = -F[0, i + 1]
        w = 0.5 * (jdot[i] - (_fwd(jt, i) - jt) / h + e[i])
        W[0, i + 1] = _mid_to_site(w, i, order)
        W[i + 1, 0] = -W[0, i + 1]
        for k in range(i + 1, d):
            f = ((_fwd(a[k], i) - a[k]) - (_fwd(a[i], k) - a[i])) / h
            dj = ((_fwd(jl[k], i) - jl[k]) - (_fwd(jl[i], k) - jl[i])) / h
            w = 0.5 * (dj + f)
            if order == 4:
                lap = sum(_fwd(f, ax) + _bwd(f, ax) - 2 * f for ax in (i, k))
                f = f - lap / 24
            F[i + 1, k + 1] = _mid_to_site(_mid_to_site(f, i, order), k, order)
            F[k + 1, i + 1] = -F[i + 1, k + 1]
            W[i + 1, k + 1] = _mid_to_site(_mid_to_site(w, i, order), k, order)
            W[k + 1, i + 1] = -W[i + 1, k + 1]
    J = np.array([np.imag(np.conj(phi) * Dm) for Dm in D])
    return {"P": np.abs(phi) ** 2, "M": M, "F": F, "J": J, "W": W}


def flat_invariants(u):
    """Invariant fields of a static 2D configuration (LatticeConfig2D)."""
    z = np.zeros_like(u.phi)
    return invariant_fields(u.phi, z, u.a, np.zeros_like(u.a), u.grid.spacing)


# ---------------------------------------------------------------------------
# snapshots and lab sampling


class SnapshotStore:
    """States restricted to a sub-box, stored at a fixed cadence.

    ``box`` is a tuple of slices selecting the stored region; a two-cell
    halo is kept so centered differences are exact inside.
    """

    def __init__(self, grid, mode, box=None, halo=2, cache=24):
        self.grid = grid
        self.mode = mode
        if box is None:
            box = tuple(slice(0, n) for n in grid.dims)
        lo = [max(0, b.start - halo) for b in box]
        hi = [min(n, b.stop + halo) for b, n in zip(box, grid.dims)]
        self.box = tuple(slice(l, u) for l, u in zip(lo, hi))
        self.origin = tuple(grid.origin[k] + lo[k] * grid.spacing for k in range(grid.ndim))
        self.times = []
        self.states = []
        self._cache = OrderedDict()
        self._cache_size = cache

    def add(self, state):
        b = self.box
        self.states.append((state.phi[b].copy(), state.pi[b].copy(),
                            state.a[(slice(None),) + b].copy(), state.e[(slice(None),) + b].copy()))
        self.times.append(state.t)

    def invariants(self, k):
        """Prefiltered invariant fields of snapshot k (cached)."""
        if k in self._cache:
            self._cache.move_to_end(k)
            return self._cache[k]
        phi, pi, a, e = self.states[k]
        inv = invariant_fields(phi, pi, a, e, self.grid.spacing)
        out = {}
        for name, arr in inv.items():
            flat = arr.reshape((-1,) + phi.shape)
            out[name] = (arr.shape[:-phi.ndim],
                         np.array([spline_filter(f, order=3, mode="mirror") for f in flat]))
        self._cache[k] = out
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return out

    @property
    def dt(self):
        return self.times[1] - self.times[0] if len(self.times) > 1 else math.inf


class LabSampler:
    """Evaluate invariant lab fields at spacetime points (t, x, y, z).

    Negative times use the time reflection of the stored solution
    (valid for data with zero initial velocity): scalars and spatial
    components are even, components with one time index odd.
    """

    def __init__(self, store, time_even=True):
        self.store = store
        self.time_even = time_even

    def _spatial(self, X):
        """Grid coordinates and the frame matrix B (N, 4, d+1)."""
        g = self.store.grid
        N = len(X)
        if self.store.mode == "axisymmetric":
            rho = np.hypot(X[:, 1], X[:, 2])
            th = np.arctan2(X[:, 2], X[:, 1])
            pos = np.stack([rho, X[:, 3]], axis=1)
            B = np.zeros((N, 4, 3))
            B[:, 0, 0] = 1
            B[:, 1, 1] = np.cos(th)
            B[:, 2, 1] = np.sin(th)
            B[:, 3, 2] = 1
        elif self.store.mode == "planar":
            pos = X[:, 1:3]
            B = np.zeros((N, 4, 3))
            B[:, 0, 0] = B[:, 1, 1] = B[:, 2, 2] = 1
        else:
            pos = X[:, 1:4]
            B = np.broadcast_to(np.eye(4), (N, 4, 4)).copy()
        coords = np.array([(pos[:, k] - self.store.origin[k]) / g.spacing
                           for k in range(pos.shape[1])])
        return coords, B

    def sample(self, X):
        """Dict of lab-frame fields at points X (N, 4), cartesian components."""
        X = np.asarray(X, dtype=float)
        st = self.store
        t = X[:, 0]
        sign = np.ones(len(X))
        if np.any(t < 0):
            if not self.time_even:
                raise ValueError("negative times need time-even data")
            sign = np.where(t < 0, -1.0, 1.0)
            t = np.abs(t)
        times = np.asarray(st.times)
        if t.max() > times[-1] + 1e-12 or len(times) < 4:
            raise ValueError("time %.4g outside the stored run (%.4g)" % (t.max(), times[-1]))
        dt = times[1] - times[0]
        k0 = np.clip(np.floor((t - times[0]) / dt).astype(int) - 1, 0, len(times) - 4)
        coords, B = self._spatial(X)
        acc = None
        for k in np.unique(np.concatenate([k0 + j for j in range(4)])):
            sel = np.nonzero((k >= k0) & (k <= k0 + 3))[0]
            # Lagrange weight of node k for the stencil k0..k0+3
            w = np.ones(len(sel))
            tk = times[k]
            for j in range(4):
                kj = k0[sel] + j
                other = kj != k
                w = np.where(other, w * (t[sel] - times[kj]) / np.where(other, tk - times[kj], 1.0), w)
            inv = st.invariants(k)
            if acc is None:
                acc = {n: np.zeros(shape + (len(X),)) for n, (shape, _) in inv.items()}
            for name, (shape, arrs) in inv.items():
                vals = np.array([map_coordinates(f, coords[:, sel], order=3, mode="mirror",
                                                 prefilter=False) for f in arrs])
                acc[name].reshape(-1, len(X))[:, sel] += w * vals
        out = {}
        # time reflection: one time index flips sign
        n = B.shape[2]
        tsign = np.ones((n,) + (len(X),))
        tsign[0] = sign
        out["P"] = acc["P"]
        out["J"] = np.einsum("nma,an->nm", B, acc["J"] * tsign)
        for name in ("M", "F", "W"):
            T = acc[name] * tsign[:, None] * tsign[None, :]
            out[name] = np.einsum("nma,abn,nkb->nmk", B, T, B)
        return out


# ---------------------------------------------------------------------------
# cross sections


def cross_section_grid(radius, spacing):
    """Cell-centered square grid covering the disk of the given radius."""
    k = int(math.ceil(radius / spacing))
    c = (np.arange(-k, k) + 0.5) * spacing
    Y2, Y3 = np.meshgrid(c, c, indexing="ij")
    mask = np.hypot(Y2, Y3) <= radius
    return Y2, Y3, mask


@dataclass
class CrossSection:
    y0: float
    y1: float
    y2: np.ndarray
    y3: np.ndarray
    area: float
    P: np.ndarray
    M: np.ndarray      # chart components (4, 4, N)
    F: np.ndarray
    J: np.ndarray
    W: np.ndarray
    ginv: np.ndarray = None   # (N, 4, 4)

    @property
    def r(self):
        return np.hypot(self.y2, self.y3)

    def e_nu(self, epsilon, lam):
        return (0.5 * (self.M[2, 2] + self.M[3, 3]) + 0.5 * epsilon ** 2 * self.F[2, 3] ** 2
                + lam / (8 * epsilon ** 2) * (self.P - 1) ** 2)

    def e_chart(self, epsilon, lam):
        """e_{eps,lam}(U, g): twice T^0_0 in the chart metric."""
        gi = np.moveaxis(self.ginv, 0, -1)  # (4, 4, N)
        a = gi.copy()
        a[0, 0] = -gi[0, 0]
        a[0, 1:] = 0
        a[1:, 0] = 0
        kin = 0.5 * np.einsum("abn,abn->n", a, self.M)
        Fup = np.einsum("acn,bdn,cdn->abn", gi, gi, self.F)
        ff = np.einsum("abn,abn->n", Fup, self.F)
        f0 = np.einsum("bn,bn->n", Fup[0], self.F[0])
        pot = lam / (8 * epsilon ** 2) * (self.P - 1) ** 2
        return kin + 0.25 * epsilon ** 2 * (ff - 4 * f0) + pot

    def tau_terms(self, epsilon):
        """|D_tau phi|^2 + eps^2 |F_tau|^2 (sums over chart indices)."""
        d = self.M[0, 0] + self.M[1, 1]
        f = sum(self.F[a, b] ** 2 for a in range(4) for b in (0, 1))
        return d + epsilon ** 2 * f

    def integral(self, f):
        return fsum(f) * self.area

    def confinement(self, m, R):
        w = WeightFunction(R)
        return math.pi * m - self.integral(w(self.r) * self.W[2, 3])

    def winding(self, radius=None):
        """Winding of the cross-section from the flux of the vorticity."""
        return int(round(self.integral(self.W[2, 3]) / math.pi))


def pullback_cross_sections(sampler, chart, s, radius, spacing, y1_values=(0.0,)):
    """Cross sections of the chart slice y0 = s on disks |y_nu| <= radius."""
    if chart.rho0 is not None and radius > chart.rho0 * (1 + 1e-12):
        raise ValueError("radius %.4g exceeds the certified rho0 %.4g" % (radius, chart.rho0))
    Y2, Y3, mask = cross_section_grid(radius, spacing)
    y2, y3 = Y2[mask], Y3[mask]
    out = []
    for y1 in y1_values:
        Y = np.stack([np.full(y2.shape, s), np.full(y2.shape, y1), y2, y3], axis=1)
        X, J = chart.forward(Y, jacobian=True)
        lab = sampler.sample(X)
        g = np.einsum("nma,m,nmb->nab", J, np.array([-1.0, 1, 1, 1]), J)
        ginv = np.linalg.inv(g)
        M = np.einsum("nma,nmk,nkb->abn", J, lab["M"], J)
        F = np.einsum("nma,nmk,nkb->abn", J, lab["F"], J)
        W = np.einsum("nma,nmk,nkb->abn", J, lab["W"], J)
        Jc = np.einsum("nma,nm->an", J, lab["J"])
        out.append(CrossSection(s, y1, y2, y3, spacing ** 2, lab["P"], M, F, Jc, W, ginv))
    return out


def reference_cross_section(u2d, radius, spacing, center=(0.0, 0.0)):
    """The static 2D configuration sampled exactly like a chart cross-section."""
    inv = flat_invariants(u2d)
    Y2, Y3, mask = cross_section_grid(radius, spacing)
    y2, y3 = Y2[mask], Y3[mask]
    g = u2d.grid
    coords = np.array([(y2 + center[0] - g.origin[0]) / g.spacing,
                       (y3 + center[1] - g.origin[1]) / g.spacing])

    def interp(arr):
        return map_coordinates(arr, coords, order=3, mode="mirror")

    n = len(y2)
    M = np.zeros((4, 4, n))
    F = np.zeros((4, 4, n))
    W = np.zeros((4, 4, n))
    Jc = np.zeros((4, n))
    # 2D components 1, 2 map to chart components 2, 3
    for a in range(3):
        ca = 0 if a == 0 else a + 1
        Jc[ca] = interp(inv["J"][a])
        for b in range(3):
            cb = 0 if b == 0 else b + 1
            M[ca, cb] = interp(inv["M"][a, b])
            F[ca, cb] = interp(inv["F"][a, b])
            W[ca, cb] = interp(inv["W"][a, b])
    ginv = np.broadcast_to(np.diag([-1.0, 1, 1, 1]), (n, 4, 4)).copy()
    return CrossSection(0.0, 0.0, y2, y3, spacing ** 2, interp(inv["P"]), M, F, Jc, W, ginv)


# ---------------------------------------------------------------------------
# functionals


@dataclass
class ZetaValues:
    zeta1: float
    zeta2: float
    zeta3: float
    disk_energy: list
    confinement: list


def zeta(sections, L, epsilon, lam, m, radius, energy_ref, kappa2=1.0):
    """(zeta1, zeta2, zeta3) on a chart slice from its cross sections.

    ``L`` is the length of the y1 circle; the y1 integral is the mean over
    the sections times L (exact for axisymmetric data with one section).
    """
    z1, z2, z3, de, cf = [], [], [], [], []
    for cs in sections:
        e = cs.e_chart(epsilon, lam)
        r2 = cs.r ** 2
        z1.append(cs.integral((1 + kappa2 * r2) * e) - energy_ref)
        d = cs.confinement(m, radius)
        cf.append(d)
        z2.append(abs(d))
        z3.append(cs.integral(cs.tau_terms(epsilon) + r2 * cs.e_nu(epsilon, lam)))
        de.append(cs.integral(cs.e_nu(epsilon, lam)))
    return ZetaValues(L * float(np.mean(z1)), L * float(np.mean(z2)), L * float(np.mean(z3)),
                      de, cf)


def tube_coordinates(chart, state, rho_max, guess_radius=None):
    """Chart coordinates of lab sites near the string at the state's time.

    Returns (site mask, y array (K, 4)); sites whose inversion lands
    outside |y_nu| <= rho_max are dropped from the mask.
    """
    g = state.grid
    t = state.t
    if state.mode == "axisymmetric":
        r, z = g.mesh()
        pts = np.stack([np.full(r.shape, t), r, np.zeros(r.shape), z], axis=-1)
    elif state.mode == "planar":
        raise ValueError("planar states have no closed-string chart")
    else:
        x, y, z = g.mesh()
        pts = np.stack([np.full(x.shape, t), x, y, z], axis=-1)
    # prefilter by distance to the string at y0 = t
    s = chart.curve.L * np.arange(512) / 512
    hs = chart.ws.h(np.full(s.shape, t), s)
    from scipy.spatial import cKDTree
    if guess_radius is None:
        # spatial reach of |y_nu| < rho_max on the slice: the frame's
        # spatial part grows like sec and the normal time offset like tan
        T = min(abs(t) + rho_max, 1.4)
        guess_radius = rho_max * (1 / math.cos(T) + math.tan(T)) + 2 * g.spacing
    reach = guess_radius
    dist, _ = cKDTree(hs).query(pts[..., 1:].reshape(-1, 3))
    cand = dist.reshape(g.dims) < reach
    inv = chart_inverse(chart, pts[cand], rho=rho_max)
    mask = np.zeros(g.dims, dtype=bool)
    idx = np.argwhere(cand)[inv.inside]
    mask[tuple(idx.T)] = True
    return mask, inv.y[inv.inside]


def exterior_energy(state, chart, rho, model=None, tube=None):
    """Energy on the lab slice outside the tube psi(|y_nu| < rho)  (zeta4)."""
    m = state.model() if model is None else model
    shares = m.site_shares(state.phi, state.a, state.pi, state.e)
    mask, _ = tube_coordinates(chart, state, rho) if tube is None else tube
    return fsum(shares[~mask])


def weighted_tube_energy(state, chart, rho, model=None, tube=None):
    """Integral over the tube of |y_nu|^2 times the lab energy density."""
    m = state.model() if model is None else model
    shares = m.site_shares(state.phi, state.a, state.pi, state.e)
    mask, y = tube_coordinates(chart, state, rho) if tube is None else tube
    d2 = np.zeros(state.grid.dims)
    d2[mask] = y[:, 2] ** 2 + y[:, 3] ** 2
    return fsum(d2[mask] * shares[mask])


# ---------------------------------------------------------------------------
# cores


@dataclass
class CorePoint:
    t: float
    position: tuple
    winding: int
    error: float


def _bilinear_zero(c00, c10, c01, c11):
    """Zero of the bilinear interpolant on the unit square (Newton)."""
    u = v = 0.5
    for _ in range(30):
        f = c00 * (1 - u) * (1 - v) + c10 * u * (1 - v) + c01 * (1 - u) * v + c11 * u * v
        fu = (c10 - c00) * (1 - v) + (c11 - c01) * v
        fv = (c01 - c00) * (1 - u) + (c11 - c10) * u
        # solve [Re; Im] system
        A = np.array([[fu.real, fv.real], [fu.imag, fv.imag]])
        try:
            du, dv = np.linalg.solve(A, [f.real, f.imag])
        except np.linalg.LinAlgError:
            break
        u, v = u - du, v - dv
        if abs(du) + abs(dv) < 1e-14:
            break
    return min(max(u, -0.5), 1.5), min(max(v, -0.5), 1.5)


def track_cores(state, m=None, pair=(0, 1)):
    """Core positions from winding-carrying plaquettes.

    2D and axisymmetric states: every plaquette with nonzero gauge-
    invariant winding; the core is the zero of the bilinear interpolant of
    phi transported to the plaquette's base corner.  Raises RuntimeError
    when no winding plaquette exists (string lost).
    """
    g = state.grid
    if g.ndim != 2:
        raise ValueError("track_cores handles 2D and axisymmetric states; use cross sections in 3D")
    from .lattice import plaquette_winding
    w = plaquette_winding(state.phi, state.a, g, pair)
    idx = np.argwhere(w != 0)
    if len(idx) == 0:
        raise RuntimeError("string lost: no winding plaquette")
    h = g.spacing
    out = []
    U0 = np.exp(-1j * h * state.a[0])
    U1 = np.exp(-1j * h * state.a[1])
    for i, j in idx:
        p00 = state.phi[i, j]
        p10 = U0[i, j] * state.phi[i + 1, j]
        p01 = U1[i, j] * state.phi[i, j + 1]
        p11 = U0[i, j] * U1[i + 1, j] * state.phi[i + 1, j + 1]
        u, v = _bilinear_zero(p00, p10, p01, p11)
        pos = (g.origin[0] + (i + u) * h, g.origin[1] + (j + v) * h)
        out.append(CorePoint(state.t, pos, int(w[i, j]), 0.5 * h))
    return out


def compare_nambu_goto(times, radii, R0):
    """|R(t) - R0 cos(t / R0)| per sample and its maximum relative to R0."""
    times = np.asarray(times, dtype=float)
    err = np.abs(np.asarray(radii) - R0 * np.cos(times / R0))
    return err, float(err.max() / R0) if len(err) else 0.0


def profile_comparison(sections, ref, epsilon, lam):
    """Gauge-invariant distance of cross sections to a reference section.

    Sum over sections of int (|phi| - |phi_ref|)^2 + eps^2 int (F_nu -
    F_nu_ref)^2 + int |e_nu - e_nu_ref|; the reference must be sampled on
    the same disk grid.
    """
    tot = 0.0
    en_ref = ref.e_nu(epsilon, lam)
    for cs in sections:
        if cs.y2.shape != ref.y2.shape:
            raise ValueError("reference sampled on a different grid")
        a = (np.sqrt(np.maximum(cs.P, 0)) - np.sqrt(np.maximum(ref.P, 0))) ** 2
        b = epsilon ** 2 * (cs.F[2, 3] - ref.F[2, 3]) ** 2
        c = np.abs(cs.e_nu(epsilon, lam) - en_ref)
        tot += cs.integral(a + b + c)
    return tot


# ---------------------------------------------------------------------------
# records and output


CSV_COLUMNS = ["t", "zeta1", "zeta2", "zeta3", "zeta4", "weighted_tube_energy",
               "exterior_energy", "confinement_integral", "core_rho", "core_z",
               "gauss_norm", "total_energy"]


@dataclass
class DiagnosticsRecord:
    t: float
    zeta1: float = float("nan")
    zeta2: float = float("nan")
    zeta3: float = float("nan")
    zeta4: float = float("nan")
    weighted_tube_energy: float = float("nan")
    exterior_energy: float = float("nan")
    confinement_integral: float = float("nan")
    core_positions: list = field(default_factory=list)
    gauss_norm: float = float("nan")
    total_energy: float = float("nan")

    def row(self):
        cr = self.core_positions[0] if self.core_positions else (float("nan"), float("nan"))
        return [self.t, self.zeta1, self.zeta2, self.zeta3, self.zeta4,
                self.weighted_tube_energy, self.exterior_energy, self.confinement_integral,
                cr[0], cr[1], self.gauss_norm, self.total_energy]


def records_csv(records, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(["%.12g" % v for v in r.row()])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def svg_plot(series, path=None, title="", xlabel="t", ylabel="", logy=False, size=(480, 320)):
    """Minimal dependency-free line plot.  ``series``: {label: (x, y)}."""
    W, H = size
    pad = 48
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    ok = np.isfinite(ys) & ((ys > 0) if logy else True)
    xs_all, ys_all = xs, ys
    if not np.any(ok):
        ys_all = np.zeros(1)
        xs_all = np.zeros(1)
    else:
        xs_all, ys_all = xs[ok], ys[ok]
    tf = np.log10 if logy else (lambda v: v)
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(tf(ys_all).min()), float(tf(ys_all).max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def X(v):
        return pad + (W - 2 * pad) * (v - x0) / (x1 - x0)

    def Y(v):
        return H - pad - (H - 2 * pad) * (tf(v) - y0) / (y1 - y0)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (W, H),
             '<rect width="100%" height="100%" fill="white"/>',
             '<text x="%d" y="20" font-size="14">%s</text>' % (pad, title),
             '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>' % (pad, H - pad, W - pad, H - pad),
             '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>' % (pad, pad, pad, H - pad),
             '<text x="%d" y="%d" font-size="12">%s</text>' % (W // 2, H - 10, xlabel),
             '<text x="4" y="%d" font-size="12">%s</text>' % (pad - 10, ylabel),
             '<text x="%d" y="%d" font-size="10">%.3g</text>' % (pad, H - pad + 14, x0),
             '<text x="%d" y="%d" font-size="10">%.3g</text>' % (W - pad - 20, H - pad + 14, x1),
             '<text x="2" y="%d" font-size="10">%s</text>' % (H - pad, ("1e%.1f" % y0) if logy else "%.3g" % y0),
             '<text x="2" y="%d" font-size="10">%s</text>' % (pad + 4, ("1e%.1f" % y1) if logy else "%.3g" % y1)]
    for k, (label, (x, y)) in enumerate(series.items()):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        good = np.isfinite(y) & ((y > 0) if logy else True)
        pts = " ".join("%.1f,%.1f" % (X(a), Y(b)) for a, b in zip(x[good], y[good]))
        c = colors[k % len(colors)]
        parts.append('<polyline fill="none" stroke="%s" stroke-width="1.5" points="%s"/>' % (c, pts))
        parts.append('<text x="%d" y="%d" font-size="11" fill="%s">%s</text>'
                     % (W - pad - 120, pad + 14 * k, c, label))
    parts.append("</svg>")
    text = "\n".join(parts)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def summary_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(type(o))
