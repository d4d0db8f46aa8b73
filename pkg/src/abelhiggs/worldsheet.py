"""Closed curves, conformal Nambu-Goto worldsheets and normal charts.

A closed curve h0 is stored as a real trigonometric series in its
arclength s in [0, L).  The worldsheet with zero initial velocity is
h(y0, y1) = (h0(y1 + y0) + h0(y1 - y0)) / 2, H = (y0, h).  Spacetime
vectors are arrays with last axis (t, x, y, z) and eta = diag(-1,1,1,1).

The normal chart is psi(y) = H(y0, y1) + nu1(y0, y1) y2 + nu2(y0, y1) y3.
Frame derivatives use complex-step differentiation, so every frame
routine avoids abs/conj and works for complex arguments.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize
from scipy.spatial import cKDTree

__all__ = [
    "ClosedCurve", "arclength_reparametrize", "circle", "random_curve",
    "Worldsheet", "build_surface", "mean_curvature_residual",
    "NormalChart", "normal_frame", "chart_forward", "chart_inverse",
    "metric_in_chart", "validity_radii", "read_curve_csv", "self_distance",
    "ETA", "mdot",
]

ETA = np.array([-1.0, 1.0, 1.0, 1.0])
CSTEP = 1e-30


def mdot(u, v):
    """Minkowski product over the last axis (no conjugation)."""
    return -u[..., 0] * v[..., 0] + (u[..., 1:] * v[..., 1:]).sum(-1)


# ---------------------------------------------------------------------------
# curves


class ClosedCurve:
    """h0(s) = a0 + sum_k a_k cos(k w s) + b_k sin(k w s), w = 2 pi / L."""

    def __init__(self, L, a0, ak, bk):
        self.L = float(L)
        self.a0 = np.asarray(a0, dtype=float)
        self.ak = np.asarray(ak, dtype=float).reshape(-1, 3)
        self.bk = np.asarray(bk, dtype=float).reshape(-1, 3)
        self.min_self_distance = None

    @property
    def modes(self):
        return len(self.ak)

    def __call__(self, s, deriv=0):
        """h0 and its derivatives at ``s`` (real or complex), shape (..., 3)."""
        s = np.asarray(s)
        w = 2 * math.pi / self.L
        k = np.arange(1, self.modes + 1)
        arg = np.multiply.outer(s, k * w)
        kw = (k * w) ** deriv
        c, sn = np.cos(arg), np.sin(arg)
        # d^m/ds^m cos = kw^m cos(x + m pi/2), same for sin
        ph = deriv % 4
        if ph == 0:
            cc, ss = c, sn
        elif ph == 1:
            cc, ss = -sn, c
        elif ph == 2:
            cc, ss = -c, -sn
        else:
            cc, ss = sn, -c
        out = (cc * kw) @ self.ak + (ss * kw) @ self.bk
        if deriv == 0:
            out = out + self.a0
        return out

    def speed_defect(self, n=4096):
        s = self.L * np.arange(n) / n
        return float(np.max(np.abs(np.linalg.norm(self(s, 1), axis=-1) - 1)))

    def curvature(self, s):
        return np.linalg.norm(self(s, 2), axis=-1)

    def min_radius_of_curvature(self, n=4096):
        s = self.L * np.arange(n) / n
        k = self.curvature(s).max()
        return math.inf if k == 0 else 1.0 / k

    def coefficients_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "ax", "ay", "az", "bx", "by", "bz"])
            w.writerow([0] + ["%.17g" % v for v in self.a0] + [0, 0, 0])
            for k in range(self.modes):
                w.writerow([k + 1] + ["%.17g" % v for v in self.ak[k]]
                           + ["%.17g" % v for v in self.bk[k]])

    def digest(self):
        import hashlib
        h = hashlib.sha256()
        for arr in (np.array([self.L]), self.a0, self.ak, self.bk):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def _fit_series(samples, L, modes):
    """Real trig series through uniform samples at s = k L / N."""
    N = len(samples)
    c = np.fft.rfft(samples, axis=0) / N
    a0 = c[0].real
    K = min(modes, (N - 1) // 2)
    ak = 2 * c[1:K + 1].real
    bk = -2 * c[1:K + 1].imag
    return ClosedCurve(L, a0, ak, bk)


def _trim(curve, rtol=1e-15):
    mag = np.hypot(np.linalg.norm(curve.ak, axis=1), np.linalg.norm(curve.bk, axis=1))
    big = np.nonzero(mag > rtol * max(1.0, mag.max(initial=0.0)))[0]
    K = big[-1] + 1 if len(big) else 1
    return ClosedCurve(curve.L, curve.a0, curve.ak[:K], curve.bk[:K])


def _reparam_once(curve, modes, n):
    """Resample a trig curve at uniform arclength, spectrally."""
    t = curve.L * np.arange(n) / n
    speed = np.linalg.norm(curve(t, 1), axis=-1)
    # spectral cumulative integral of the speed
    c = np.fft.rfft(speed) / n
    L = c[0].real * curve.L
    k = np.arange(1, len(c))
    w = 2 * math.pi / curve.L

    def s_of(tt):
        e = np.exp(1j * np.multiply.outer(tt, k * w))
        return c[0].real * tt + 2 * np.real(e @ (c[1:] / (1j * k * w)))

    def ds_of(tt):
        e = np.exp(1j * np.multiply.outer(tt, k * w))
        return c[0].real + 2 * np.real(e @ c[1:])

    s0 = s_of(np.array([0.0]))[0]
    target = s0 + L * np.arange(n) / n
    tt = target / c[0].real
    for _ in range(50):
        r = s_of(tt) - target
        tt = tt - r / ds_of(tt)
        if np.max(np.abs(r)) < 1e-14 * L:
            break
    return _fit_series(curve(tt), L, modes)


def arclength_reparametrize(points=None, curve=None, modes=64, n=None, tol=1e-12,
                            check_embedded=True):
    """Arclength trig-series representation of a closed curve.

    Give either ``points`` (M x 3 samples of a closed curve, in order, not
    repeating the first point) or a ``curve`` (ClosedCurve, any speed).
    Raw points go through a periodic cubic spline in the chord-length
    parameter; the result is then reparametrized spectrally until the
    speed equals one to ``tol``.
    """
    if n is None:
        n = 8 * modes
    if curve is None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 8:
            raise ValueError("points must be an (M, 3) array with M >= 8")
        closed = np.vstack([pts, pts[:1]])
        chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        if np.any(chord == 0):
            raise ValueError("repeated consecutive points")
        t = np.concatenate(([0.0], np.cumsum(chord)))
        sp = CubicSpline(t, closed, bc_type="periodic")
        u = t[-1] * np.arange(n) / n
        curve = _fit_series(sp(u), t[-1], modes)
    else:
        curve = _fit_series(curve(curve.L * np.arange(n) / n), curve.L, modes)
    for _ in range(20):
        curve = _reparam_once(curve, modes, n)
        if curve.speed_defect() < tol:
            break
    curve = _trim(curve)
    if check_embedded:
        curve.min_self_distance = self_distance(curve)
    return curve


def self_distance(curve, n=1024):
    """Smallest distance between points of the curve that are not neighbours.

    Pairs closer along the curve than pi times the minimal radius of
    curvature are skipped.  A vanishing distance raises ValueError.
    """
    s = curve.L * np.arange(n) / n
    p = curve(s)
    rmin = min(curve.min_radius_of_curvature(), curve.L / (2 * math.pi))
    gap = min(math.pi * rmin, 0.45 * curve.L)
    dmat = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
    arc = np.abs(s[:, None] - s[None, :])
    arc = np.minimum(arc, curve.L - arc)
    mask = arc > gap
    if not np.any(mask):
        return math.inf
    dm = np.where(mask, dmat, np.inf)
    i, j = np.unravel_index(np.argmin(dm), dm.shape)
    best = dm[i, j]
    cand = (s[i], s[j])

    def fun(x):
        a = abs(x[0] - x[1]) % curve.L
        if min(a, curve.L - a) < gap:
            return best ** 2
        return float(np.sum((curve(np.array(x[0])) - curve(np.array(x[1]))) ** 2))

    res = minimize(fun, cand, method="Nelder-Mead",
                   options={"xatol": 1e-12 * curve.L, "fatol": 1e-30, "maxiter": 2000})
    best = min(best, math.sqrt(max(res.fun, 0.0)))
    if best < 1e-6 * curve.L:
        raise ValueError("curve self-intersects (distance %.3g)" % best)
    return best


def circle(R, center=(0.0, 0.0, 0.0)):
    """Counter-clockwise circle of radius R in the z = const plane."""
    L = 2 * math.pi * R
    c = ClosedCurve(L, np.asarray(center, dtype=float), [[R, 0, 0]], [[0, R, 0]])
    c.min_self_distance = 2 * R
    return c


def random_curve(rng, modes=3, amplitude=0.15, R=1.0):
    """Smooth random perturbation of a unit circle, arclength-parametrized."""
    th = 2 * math.pi * np.arange(512) / 512
    pts = np.stack([R * np.cos(th), R * np.sin(th), np.zeros_like(th)], axis=1)
    for k in range(2, modes + 2):
        coef = rng.normal(size=(2, 3)) * amplitude * R / k ** 2
        pts = pts + np.outer(np.cos(k * th), coef[0]) + np.outer(np.sin(k * th), coef[1])
    return arclength_reparametrize(points=pts)


# ---------------------------------------------------------------------------
# worldsheet


class Worldsheet:
    """Conformal worldsheet with zero initial velocity over a closed curve.

    ``perturbation`` optionally adds a spatial displacement
    delta(y0, y1) (callable returning (...,3) and accepting complex
    arguments) for tests of non-minimal sheets.
    """

    def __init__(self, curve, T, c0=None, T1=None, perturbation=None):
        self.curve = curve
        self.T = float(T)
        self.c0 = c0
        self.T1 = T1
        self.perturbation = perturbation

    @property
    def L(self):
        return self.curve.L

    def h(self, y0, y1):
        out = 0.5 * (self.curve(y1 + y0) + self.curve(y1 - y0))
        if self.perturbation is not None:
            out = out + self.perturbation(y0, y1)
        return out

    def H(self, y0, y1):
        y0 = np.asarray(y0)
        return np.concatenate([y0[..., None] + 0 * np.asarray(y1)[..., None],
                               self.h(y0, y1)], axis=-1)

    def dH(self, y0, y1):
        """(dH/dy0, dH/dy1), each (..., 4)."""
        y0 = np.asarray(y0)
        y1 = np.asarray(y1)
        p = self.curve(y1 + y0, 1)
        m = self.curve(y1 - y0, 1)
        d0 = 0.5 * (p - m)
        d1 = 0.5 * (p + m)
        if self.perturbation is not None:
            d0 = d0 + _cs_partial(lambda a: self.perturbation(a, y1), y0)
            d1 = d1 + _cs_partial(lambda b: self.perturbation(y0, b), y1)
        one = np.ones(np.broadcast(y0, y1).shape + (1,))
        return (np.concatenate([one, d0], axis=-1),
                np.concatenate([0 * one, d1], axis=-1))

    def ddH(self, y0, y1):
        """Second derivatives d00, d01, d11 of h (spatial, shape (..., 3))."""
        p = self.curve(y1 + y0, 2)
        m = self.curve(y1 - y0, 2)
        d00 = 0.5 * (p + m)
        d11 = 0.5 * (p + m)
        d01 = 0.5 * (p - m)
        if self.perturbation is not None:
            e = 1e-4 * self.L
            f = self.perturbation
            d00 = d00 + (f(y0 + e, y1) - 2 * f(y0, y1) + f(y0 - e, y1)) / e ** 2
            d11 = d11 + (f(y0, y1 + e) - 2 * f(y0, y1) + f(y0, y1 - e)) / e ** 2
            d01 = d01 + (f(y0 + e, y1 + e) - f(y0 + e, y1 - e) - f(y0 - e, y1 + e)
                         + f(y0 - e, y1 - e)) / (4 * e * e)
        return d00, d01, d11

    def gamma(self, y0, y1):
        d0, d1 = self.dH(y0, y1)
        return mdot(d0, d0), mdot(d0, d1), mdot(d1, d1)


def _cs_partial(fun, x):
    """Complex-step derivative of fun at real x (falls back to differences)."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        e = 1e-7
        return (fun(x + e) - fun(x - e)) / (2 * e)
    return np.imag(fun(x + 1j * CSTEP)) / CSTEP


def build_surface(curve, T, c0=0.05, scan_points=256):
    """Worldsheet over ``curve`` on (-T, T) x S^1.

    The timelike domain is found by scanning gamma_11 >= c0 forward in
    y0; asking for T beyond it raises ValueError with the admissible T1.
    """
    s = curve.L * np.arange(scan_points) / scan_points
    ws = Worldsheet(curve, T, c0)
    dt = curve.L / 2048
    t = 0.0
    T1 = None
    while t < curve.L:
        _, _, g11 = ws.gamma(np.full_like(s, t), s)
        if g11.min() < c0:
            T1 = t
            break
        t += dt
    if T1 is None:
        T1 = curve.L
    ws.T1 = T1
    if T > T1:
        raise ValueError("requested T=%.6g beyond the timelike domain T1=%.6g (c0=%.3g)"
                         % (T, T1, c0))
    return ws


def mean_curvature_residual(ws, y0, y1):
    """Max norm of the normal part of gamma^{ab} d_a d_b H at the samples."""
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    g00, g01, g11 = ws.gamma(y0, y1)
    det = g00 * g11 - g01 * g01
    i00, i01, i11 = g11 / det, -g01 / det, g00 / det
    d00, d01, d11 = ws.ddH(y0, y1)
    v = i00[..., None] * d00 + 2 * i01[..., None] * d01 + i11[..., None] * d11
    v = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    d0, d1 = ws.dH(y0, y1)
    c0, c1 = mdot(v, d0), mdot(v, d1)
    tang = ((i00 * c0 + i01 * c1)[..., None] * d0 + (i01 * c0 + i11 * c1)[..., None] * d1)
    n = v - tang
    return float(np.max(np.sqrt(np.abs(mdot(n, n)))))


# ---------------------------------------------------------------------------
# frames


def _rmf(curve, n=4096):
    """Closed rotation-minimizing normal along h0 at n uniform samples."""
    s = curve.L * np.arange(n + 1) / n
    x = curve(s)
    t = curve(s, 1)
    t = t / np.linalg.norm(t, axis=1, keepdims=True)
    k = curve(s[:1], 2)[0]
    if np.linalg.norm(k) > 1e-12:
        r0 = -k / np.linalg.norm(k)
    else:
        trial = np.eye(3)[np.argmin(np.abs(t[0]))]
        r0 = trial - trial.dot(t[0]) * t[0]
        r0 /= np.linalg.norm(r0)
    r = np.empty_like(x)
    r[0] = r0
    for i in range(n):
        v1 = x[i + 1] - x[i]
        c1 = v1.dot(v1)
        rl = r[i] - 2 / c1 * v1.dot(r[i]) * v1
        tl = t[i] - 2 / c1 * v1.dot(t[i]) * v1
        v2 = t[i + 1] - tl
        c2 = v2.dot(v2)
        r[i + 1] = rl - 2 / c2 * v2.dot(rl) * v2 if c2 > 0 else rl
    # holonomy: angle from r0 to the transported r_n about t0
    b0 = np.cross(t[0], r0)
    alpha = math.atan2(r[n].dot(b0), r[n].dot(r0))
    ang = -alpha * s / curve.L
    b = np.cross(t, r)
    r = np.cos(ang)[:, None] * r + np.sin(ang)[:, None] * b
    return s[:-1], r[:-1], alpha


class NormalChart:
    """Normal chart over a worldsheet.

    ``rotation`` rotates the normal frame by a constant angle.
    """

    def __init__(self, ws, rho0=None, T1=None, rotation=0.0, frame_modes=64, step=1e-5):
        self.ws = ws
        self.curve = ws.curve
        self.rotation = float(rotation)
        s, r, self.holonomy = _rmf(self.curve)
        fit = _fit_series(r, self.curve.L, frame_modes)
        self._ref = _trim(fit, 1e-14)
        self.rho0 = rho0
        self.T1 = ws.T if T1 is None else T1
        self.step = step * self.curve.L
        self.c0 = ws.c0

    # -- frame ------------------------------------------------------------

    def spatial_frame(self, y1):
        """(n1, n2) at y0 = 0: orthonormal, normal to h0'(y1)."""
        tau = self.curve(y1, 1)
        tau = tau / np.sqrt((tau * tau).sum(-1))[..., None]
        N = self._ref(y1)
        N = N - (N * tau).sum(-1)[..., None] * tau
        n1 = N / np.sqrt((N * N).sum(-1))[..., None]
        n2 = np.cross(n1, tau)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return c * n1 + s * n2, -s * n1 + c * n2

    def frame(self, y0, y1):
        """Minkowski-orthonormal normal frame (nu1, nu2), each (..., 4)."""
        y0 = np.asarray(y0)
        y1 = np.asarray(y1)
        n1, n2 = self.spatial_frame(y1)
        z = np.zeros(n1.shape[:-1] + (1,), dtype=n1.dtype)
        v = [np.concatenate([z, n1], -1), np.concatenate([z, n2], -1)]
        d0, d1 = self.ws.dH(y0, y1)
        g00, g01, g11 = mdot(d0, d0), mdot(d0, d1), mdot(d1, d1)
        det = g00 * g11 - g01 * g01
        i00, i01, i11 = g11 / det, -g01 / det, g00 / det
        pv = []
        for vk in v:
            c0, c1 = mdot(vk, d0), mdot(vk, d1)
            pv.append(vk - (i00 * c0 + i01 * c1)[..., None] * d0
                      - (i01 * c0 + i11 * c1)[..., None] * d1)
        # symmetric orthonormalization: W = V G^{-1/2}, rotation covariant
        a, b, c = mdot(pv[0], pv[0]), mdot(pv[0], pv[1]), mdot(pv[1], pv[1])
        sd = np.sqrt(a * c - b * b)
        tr = np.sqrt(a + c + 2 * sd)
        # sqrt(G) = (G + sd I)/tr; its inverse
        s00, s01, s11 = (a + sd) / tr, b / tr, (c + sd) / tr
        sdet = s00 * s11 - s01 * s01
        q00, q01, q11 = s11 / sdet, -s01 / sdet, s00 / sdet
        nu1 = q00[..., None] * pv[0] + q01[..., None] * pv[1]
        nu2 = q01[..., None] * pv[0] + q11[..., None] * pv[1]
        return nu1, nu2

    def frame_derivatives(self, y0, y1):
        """d nu_i / d y0 and d nu_i / d y1 by complex step."""
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        a1, a2 = self.frame(y0 + 1j * CSTEP, y1 + 0j)
        b1, b2 = self.frame(y0 + 0j, y1 + 1j * CSTEP)
        return (np.imag(a1) / CSTEP, np.imag(a2) / CSTEP,
                np.imag(b1) / CSTEP, np.imag(b2) / CSTEP)

    # -- chart ------------------------------------------------------------

    def forward(self, y, jacobian=False):
        """psi(y) for y (..., 4); optionally the Jacobian (..., 4, 4)."""
        y = np.asarray(y, dtype=float)
        y0, y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
        Hy = self.ws.H(y0, y1)
        nu1, nu2 = self.frame(y0, y1)
        x = Hy + nu1 * y2[..., None] + nu2 * y3[..., None]
        if not jacobian:
            return x
        d0, d1 = self.ws.dH(y0, y1)
        n10, n20, n11, n21 = self.frame_derivatives(y0, y1)
        J = np.empty(y.shape[:-1] + (4, 4))
        J[..., :, 0] = d0 + n10 * y2[..., None] + n20 * y3[..., None]
        J[..., :, 1] = d1 + n11 * y2[..., None] + n21 * y3[..., None]
        J[..., :, 2] = nu1
        J[..., :, 3] = nu2
        return x, J

    def check_domain(self, y):
        y = np.asarray(y, dtype=float)
        r = np.hypot(y[..., 2], y[..., 3])
        if self.rho0 is not None and np.any(r > self.rho0 * (1 + 1e-12)):
            raise ValueError("|y_nu| exceeds rho0 = %.4g" % self.rho0)
        if self.T1 is not None and np.any(np.abs(y[..., 0]) > self.T1 * (1 + 1e-12)):
            raise ValueError("|y0| exceeds T1 = %.4g" % self.T1)

    def metric(self, y):
        _, J = self.forward(y, jacobian=True)
        g = np.einsum("...ma,m,...mb->...ab", J, ETA, J)
        return g, J

    def sqrt_neg_g(self, y):
        _, J = self.forward(y, jacobian=True)
        return np.abs(np.linalg.det(J))


def normal_frame(chart, y0, y1):
    return chart.frame(y0, y1)


def chart_forward(chart, y, jacobian=False, check=True):
    if check:
        chart.check_domain(y)
    return chart.forward(y, jacobian)


@dataclass
class InverseResult:
    y: np.ndarray
    inside: np.ndarray
    residual: np.ndarray


def chart_inverse(chart, x, guess=None, tol=1e-10, max_iter=12, rho=None, search=512):
    """Invert psi at spacetime points x (..., 4).

    Seeds come from the nearest sample of the spatial curve at lab time
    x0 (or ``guess``).  Points whose converged |y_nu| exceeds ``rho``
    (default rho0) are reported as outside.  Newton failure for a point
    whose seed lies well inside the tube raises RuntimeError.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    X = x.reshape(-1, 4)
    rho = chart.rho0 if rho is None else rho
    L = chart.curve.L
    if guess is None:
        y = np.zeros_like(X)
        y[:, 0] = X[:, 0]
        s = L * np.arange(search) / search
        times, inv = np.unique(X[:, 0], return_inverse=True)
        if len(times) * 8 <= len(X):
            # few distinct lab times: one curve sample and tree per time
            for k, t in enumerate(times):
                sel = np.nonzero(inv == k)[0]
                hs = chart.ws.h(np.full(s.shape, t), s)
                y[sel, 1] = s[cKDTree(hs).query(X[sel, 1:])[1]]
        else:
            for i0 in range(0, len(X), 4096):
                blk = X[i0:i0 + 4096]
                t = blk[:, 0]
                hs = chart.ws.h(t[:, None] + 0 * s[None, :], s[None, :] + 0 * t[:, None])
                d = ((hs - blk[:, None, 1:]) ** 2).sum(-1)
                y[i0:i0 + 4096, 1] = s[np.argmin(d, axis=1)]
        nu1, nu2 = chart.frame(y[:, 0], y[:, 1])
        dx = X - chart.ws.H(y[:, 0], y[:, 1])
        y[:, 2] = mdot(dx, nu1)
        y[:, 3] = mdot(dx, nu2)
    else:
        y = np.array(np.broadcast_to(guess, X.shape), dtype=float)
    seed_r = np.hypot(y[:, 2], y[:, 3])
    active = np.ones(len(X), dtype=bool)
    res = np.full(len(X), np.inf)
    scale = max(1.0, L)
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        f, J = chart.forward(y[idx], jacobian=True)
        r = f - X[idx]
        res[idx] = np.max(np.abs(r), axis=-1)
        done = res[idx] < min(tol, 1e-13) * scale
        active[idx[done]] = False
        go = idx[~done]
        if len(go) == 0:
            break
        try:
            step = np.linalg.solve(J[~done], r[~done][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J[~done].reshape(-1, 4), r[~done].reshape(-1), rcond=None)[0]
        # limit the step to keep Newton in the basin
        mx = np.max(np.abs(step[:, 2:]), axis=-1)
        lim = np.where(mx > 0.5 * (rho if rho else 1.0), 0.5 * (rho if rho else 1.0) / mx, 1.0)
        y[go] = y[go] - lim[:, None] * step
        y[go, 1] = np.mod(y[go, 1], L)
    y[:, 1] = np.mod(y[:, 1], L)
    r_nu = np.hypot(y[:, 2], y[:, 3])
    conv = res < tol * scale
    inside = conv & (r_nu <= (rho if rho else np.inf))
    bad = ~conv & (seed_r < 0.5 * (rho if rho else np.inf))
    if np.any(bad):
        raise RuntimeError("chart inversion diverged inside the tube for %d points "
                           "(rho0 may be too large)" % int(bad.sum()))
    return InverseResult(y.reshape(shape + (4,)), inside.reshape(shape), res.reshape(shape))


@dataclass
class ChartMetric:
    g: np.ndarray
    ginv: np.ndarray
    sqrt_neg_g: np.ndarray
    b: np.ndarray


def metric_in_chart(chart, y, step=None):
    """g_ab, g^ab, sqrt(-g) and b^beta = (d_a sqrt(-g) / sqrt(-g)) g^{a beta}."""
    y = np.asarray(y, dtype=float)
    g, J = chart.metric(y)
    det = np.linalg.det(g)
    if np.any(np.abs(det) < 1e-12):
        raise ValueError("singular chart metric (outside the valid tube)")
    ginv = np.linalg.inv(g)
    sg = np.abs(np.linalg.det(J))
    e = chart.step if step is None else step
    grad = np.empty(y.shape)
    for a in range(4):
        dy = np.zeros(4)
        dy[a] = e
        p = chart.sqrt_neg_g(y + dy)
        m = chart.sqrt_neg_g(y - dy)
        grad[..., a] = (p - m) / (2 * e)
    b = np.einsum("...a,...ab->...b", grad / sg[..., None], ginv)
    return ChartMetric(g, ginv, sg, b)


def _injective(chart, rho, y0, n1=128, nr=6, nt=24):
    L = chart.curve.L
    s = L * np.arange(n1) / n1
    rr = rho * (np.arange(1, nr + 1) / nr)
    th = 2 * math.pi * np.arange(nt) / nt
    S, R, TH = np.meshgrid(s, rr, th, indexing="ij")
    Y = np.stack([np.full(S.shape, y0), S, R * np.cos(TH), R * np.sin(TH)], axis=-1).reshape(-1, 4)
    Y = np.vstack([Y, np.stack([np.full(n1, y0), s, 0 * s, 0 * s], -1)])
    x, J = chart.forward(Y, jacobian=True)
    if np.min(np.linalg.det(J) * np.sign(np.linalg.det(J[-1]))) <= 0:
        return False
    # neighbouring chart samples are at most this far apart
    dy = max(L / n1, rho / nr, 2 * math.pi * rho / nt)
    tree = cKDTree(x[:, 1:])
    pairs = tree.query_pairs(0.25 * dy, output_type="ndarray")
    if len(pairs) == 0:
        return True
    a, b = Y[pairs[:, 0]], Y[pairs[:, 1]]
    ds = np.abs(a[:, 1] - b[:, 1])
    ds = np.minimum(ds, L - ds)
    far = ds > 2 * L / n1 + 1e-12
    dn = np.hypot(a[:, 2] - b[:, 2], a[:, 3] - b[:, 3])
    return not np.any(far | (dn > 2 * dy))


def validity_radii(chart, T=None, fraction=0.5, bisections=6, times=3):
    """Conservative (rho0, T1, c0) for the chart.

    rho0 is the largest tested radius passing a sampled injectivity
    certificate on chart slices |y0| <= T, capped at ``fraction`` times
    the minimal radius of curvature and half the self-distance.  The cap
    is tried first; on failure the radius is bisected.
    """
    ws = chart.ws
    T = ws.T if T is None else T
    cap = fraction * chart.curve.min_radius_of_curvature()
    if chart.curve.min_self_distance is not None:
        cap = min(cap, 0.5 * chart.curve.min_self_distance)
    slices = np.linspace(-T, T, times)

    def ok(rho):
        return all(_injective(chart, rho, y0) for y0 in slices)

    if ok(cap):
        return cap, ws.T1, ws.c0
    lo, hi = 0.0, cap
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, ws.T1, ws.c0


def read_curve_csv(path, modes=64):
    """Load a curve from CSV: either x,y,z points or Fourier rows k,ax,..,bz.

    A header row naming ``k`` selects the coefficient format; the length
    is then taken from an optional ``L`` comment line (``# L=...``) or
    recomputed by reparametrization.
    """
    rows = []
    header = None
    L = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "L=" in line:
                    L = float(line.split("L=")[1])
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                header = [p.lower() for p in parts]
    data = np.array(rows, dtype=float)
    if header is not None and header[0] == "k":
        k = data[:, 0].astype(int)
        a0 = data[k == 0, 1:4][0] if np.any(k == 0) else np.zeros(3)
        pos = data[k > 0]
        K = int(pos[:, 0].max())
        ak = np.zeros((K, 3))
        bk = np.zeros((K, 3))
        ak[pos[:, 0].astype(int) - 1] = pos[:, 1:4]
        bk[pos[:, 0].astype(int) - 1] = pos[:, 4:7]
        raw = ClosedCurve(2 * math.pi if L is None else L, a0, ak, bk)
        return arclength_reparametrize(curve=raw, modes=modes)
    return arclength_reparametrize(points=data[:, :3], modes=modes)
