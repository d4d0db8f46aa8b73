"""The acceptance suite: ten pass/fail checks with their measured values.

Criteria 1-6 are self-contained (seconds to minutes).  Criteria 7-10
share two ring runs at epsilon = R0/20 and R0/40 (``ring_pair``), which
can be cached on disk through ``load_or_run``.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["CriterionResult", "ring_configs", "ring_pair", "criterion", "evaluate",
           "CHEAP", "ALL"]

CHEAP = (1, 2, 3, 5, 6)
ALL = tuple(range(1, 11))
SCALING_RANGE = (2.0, 8.0)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    detail: str = ""

    def line(self):
        return "criterion %2d %-28s %s  %s" % (self.number, self.name,
                                                "PASS" if self.passed else "FAIL", self.detail)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# 1-6: calibration, lattice identities, geometry


def _c1():
    from .lattice import Grid, total_energy_2d
    from .vortex2d import profile_to_lattice, solve_profile
    eps = 1.0
    h = eps / 8
    vals = {}
    ok = True
    for n in (1, 2):
        p = solve_profile(n, 1.0, dr=h)
        u = profile_to_lattice(p, Grid.centered(14.0, h), epsilon=eps)
        for key, e in (("profile", p.energy()), ("lattice", total_energy_2d(u))):
            rel = e / (n * math.pi) - 1
            vals["n%d_%s" % (n, key)] = e
            vals["n%d_%s_rel" % (n, key)] = rel
            ok &= abs(rel) < 5e-3
    worst = max(abs(v) for k, v in vals.items() if k.endswith("_rel"))
    return CriterionResult(1, "BPS calibration", ok, vals,
                           "max |E/(pi n) - 1| = %.2e (limit 5e-3)" % worst)


def _c2():
    from .lattice import Grid, circle_loop, vorticity, winding_degree
    from .vortex2d import boundary_energy, profile_to_lattice, solve_profile
    eps = 1.0
    g = Grid.centered(16.0, 0.25)
    u = profile_to_lattice(solve_profile(1, 1.0), g, epsilon=eps)
    x, y = [c + 0.5 * g.spacing for c in g.mesh()]
    r = np.hypot(x, y)
    om = vorticity(u)
    flux = g.spacing ** 2 * float(om[r < 15 * eps].sum())
    # degree versus vorticity on disks of several radii
    ratios = []
    degs = []
    for s in (1.0, 1.5, 2.0, 3.0, 4.0):
        inside = g.spacing ** 2 * float(om[r < s].sum())
        deg = winding_degree(u.phi, circle_loop(g, (0.0, 0.0), s)).degree
        degs.append(deg)
        be = eps * boundary_energy(u, (0.0, 0.0), s)
        ratios.append(abs(inside - math.pi * deg) / be)
    C = max(ratios)
    ok = abs(flux - math.pi) < 1e-3 and all(d == 1 for d in degs) and C < 10.0
    return CriterionResult(2, "flux quantization", ok,
                           {"flux": flux, "flux_error": flux - math.pi, "degrees": degs,
                            "lemma_ratios": ratios, "lemma_C": C},
                           "|flux - pi| = %.2e (limit 1e-3); degree 1 on all disks; "
                           "discrepancy / (eps * boundary energy) <= %.3f" % (abs(flux - math.pi), C))


def _c3():
    from .lattice import Grid, LatticeConfig2D, bogomolny_residual
    l1 = []
    for n in (32, 64, 128):
        u = _smooth_config(n, seed=7)
        b = bogomolny_residual(u, +1)
        l1.append(u.grid.spacing ** 2 * float(np.abs(b.defect).sum()))
    ratios = [l1[0] / l1[1], l1[1] / l1[2]]
    ok = all(3.2 < q < 4.8 for q in ratios)
    return CriterionResult(3, "Bogomol'nyi identity", ok, {"l1": l1, "ratios": ratios},
                           "L1 defect ratios per halving %s (target 4 +- 20%%)"
                           % ", ".join("%.3f" % q for q in ratios))


def _smooth_config(n, lam=1.5, eps=1.0, seed=0, amp=0.3):
    """Random smooth periodic configuration on [0, 2 pi)^2 with exact link averages."""
    from .lattice import Grid, LatticeConfig2D
    rng = np.random.default_rng(seed)
    grid = Grid((n, n), 2 * np.pi / n, (0.0, 0.0), (True, True))
    x, y = grid.mesh()
    c = rng.normal(size=12)
    rho = 1 + amp * (c[0] * np.sin(x + c[1]) + c[2] * np.cos(y + c[3]) * np.sin(x))
    theta = c[4] * np.sin(x + y) + c[5] * np.cos(2 * y + c[6])
    h = grid.spacing

    def a1(x, y):
        return amp * (c[7] * np.sin(y) + c[8] * np.cos(x + 2 * y))

    def a2(x, y):
        return amp * (c[9] * np.cos(x) + c[10] * np.sin(2 * x - y + c[11]))

    def lineavg(f, x, y, dx, dy):
        return (f(x, y) + 4 * f(x + dx / 2, y + dy / 2) + f(x + dx, y + dy)) / 6

    a = np.array([lineavg(a1, x, y, h, 0), lineavg(a2, x, y, 0, h)])
    return LatticeConfig2D(grid, rho * np.exp(1j * theta), a, eps, lam)


def _c4():
    from .vortex2d import energy_table
    vals = {}
    ok = True
    for lam in (1.0, 2.0):
        t = energy_table(lam, n_max=3, h=0.25)
        vals["lambda%g" % lam] = {"energy": t.energy, "error": t.error}
        ok &= t.is_monotone()
        if lam == 1.0:
            rel = [e / (math.pi * n) - 1 for n, e in zip(t.n, t.energy)]
            vals["lambda1_rel"] = rel
            ok &= all(abs(q) < 1e-2 for q in rel)
    return CriterionResult(4, "energy-table monotonicity", ok, vals,
                           "E1 < E2 < E3 beyond error bars at lambda 1, 2; lambda 1 max "
                           "|E/(pi n) - 1| = %.2e" % max(abs(q) for q in vals["lambda1_rel"]))


def _c5():
    from .worldsheet import build_surface, circle, mean_curvature_residual, random_curve
    rng = np.random.default_rng(20)
    R0 = 1.0
    ws = build_surface(circle(R0), 1.0)
    y0 = rng.uniform(-1, 1, 400)
    y1 = rng.uniform(0, ws.L, 400)
    g00, g01, g11 = ws.gamma(y0, y1)
    c2 = np.cos(y0 / R0) ** 2
    circ = max(np.abs(g00 + c2).max(), np.abs(g11 - c2).max(), np.abs(g01).max())
    mc = [mean_curvature_residual(ws, y0, y1)]
    conf = []
    for _ in range(5):
        c = random_curve(rng)
        w = build_surface(c, 0.3)
        a = rng.uniform(-0.3, 0.3, 200)
        b = rng.uniform(0, c.L, 200)
        g00, g01, g11 = w.gamma(a, b)
        conf.append(max(np.abs(g01).max(), np.abs(g00 + g11).max()))
        mc.append(mean_curvature_residual(w, a, b))
    ok = circ < 1e-8 and max(conf) < 1e-8 and max(mc) < 1e-8
    return CriterionResult(5, "worldsheet oracle", ok,
                           {"circle_error": circ, "conformal": conf, "mean_curvature": mc},
                           "circle %.1e, conformal %.1e, mean curvature %.1e (limit 1e-8)"
                           % (circ, max(conf), max(mc)))


def _c6():
    from .worldsheet import NormalChart, build_surface, circle, metric_in_chart
    rng = np.random.default_rng(6)
    chart = NormalChart(build_surface(circle(1.0), 0.8), rho0=0.45)
    ratios = []
    for r in (0.2, 0.1, 0.05, 0.025, 0.0125):
        th = rng.uniform(0, 2 * np.pi, 64)
        y = np.stack([rng.uniform(-0.5, 0.5, 64), rng.uniform(0, 6, 64),
                      r * np.cos(th), r * np.sin(th)], 1)
        ratios.append(float(np.abs(metric_in_chart(chart, y).b[:, 2:]).max() / r))
    on = np.stack([rng.uniform(-0.5, 0.5, 32), rng.uniform(0, 6, 32), 0 * np.ones(32),
                   0 * np.ones(32)], 1)
    base = float(np.abs(metric_in_chart(chart, on).b[:, 2:]).max())

    def bump(y0, y1):
        out = np.zeros(np.broadcast(y0, y1).shape + (3,), dtype=np.result_type(y0, y1, float))
        out[..., 2] = 0.01 * np.sin(y0) * np.exp(np.cos(y1) - 1)
        return out

    ws = build_surface(circle(1.0), 0.8)
    ws.perturbation = bump
    pert = float(np.abs(metric_in_chart(NormalChart(ws, rho0=0.45), on).b[:, 2:]).max())
    bounded = max(ratios) < 2 * ratios[0] + 1
    ok = bounded and pert > 10 * base
    return CriterionResult(6, "minimality signature", ok,
                           {"b_over_r": ratios, "baseline": base, "perturbed": pert},
                           "sup |b_nu|/|y_nu| = %.3g over r -> 0; perturbed |b_nu(0)| = %.2e "
                           "vs baseline %.2e" % (max(ratios), pert, base))


# ---------------------------------------------------------------------------
# 7-10: the ring runs


def ring_configs(**overrides):
    """The two ring configurations (R0/20, R0/40) of the scaling suite."""
    from .scenario import RingConfig
    return RingConfig(epsilon=1 / 20, **overrides), RingConfig(epsilon=1 / 40, **overrides)


def ring_pair(cache_dir=None, progress=None, **overrides):
    from .scenario import load_or_run
    a, b = ring_configs(**overrides)
    return load_or_run(a, cache_dir, progress), load_or_run(b, cache_dir, progress)


def _c7(r40):
    v = {"energy_drift": r40.energy_drift, "gauss_l2_over_E0": r40.gauss_l2_max,
         "silent_max": r40.silent_max, "time_reversal": r40.time_reversal}
    ok = (r40.energy_drift < 1e-4 and r40.gauss_l2_max < 1e-6 and r40.silent_max < 1e-8
          and r40.time_reversal < 1e-8)
    return CriterionResult(7, "evolution integrity", ok, v,
                           "drift %.1e, Gauss %.1e, silent %.1e, reversal %.1e"
                           % (v["energy_drift"], v["gauss_l2_over_E0"], v["silent_max"],
                              v["time_reversal"]))


def _c8(r20, r40):
    ok = r40.ng_max_rel < 0.05 and r40.ng_max_rel < r20.ng_max_rel
    return CriterionResult(8, "Nambu-Goto dynamics", ok,
                           {"max_rel_eps20": r20.ng_max_rel, "max_rel_eps40": r40.ng_max_rel},
                           "max |R - R0 cos(t/R0)|/R0: %.2e at R0/20, %.2e at R0/40 "
                           "(limit 5e-2, must decrease)" % (r20.ng_max_rel, r40.ng_max_rel))


SCALING = (
    ("zeta1(0)", lambda r: r.zeta1[0]),
    ("int zeta3 dt", lambda r: r.zeta3_integral),
    ("exterior energy t=0.3", lambda r: r.exterior_at),
    ("weighted tube energy", lambda r: r.weighted_tube_integral),
    ("profile comparison t=0.3", lambda r: r.profile_at),
)


def _c9(r20, r40):
    vals = {}
    ok = True
    parts = []
    for name, get in SCALING:
        a, b = get(r20), get(r40)
        q = a / b if b != 0 else math.inf
        good = SCALING_RANGE[0] <= q <= SCALING_RANGE[1]
        ok &= good
        vals[name] = {"eps20": a, "eps40": b, "ratio": q, "pass": good}
        parts.append("%s %.3g%s" % (name, q, "" if good else "(x)"))
    return CriterionResult(9, "eps^2 scaling", ok, vals,
                           "halving ratios: " + ", ".join(parts) + " (range [2, 8])")


def _c10(r20, r40):
    z2max = max(r40.zeta2)
    C20, C40 = r20.prop1_C, r40.prop1_C
    if C20 == 0 and C40 == 0:
        stable = True
        q = 1.0
    else:
        q = max(C20, C40) / max(min(C20, C40), 1e-300)
        stable = q <= 2.0
    ok = z2max < math.pi / 2 and max(r20.zeta2) < math.pi / 2 and stable
    return CriterionResult(10, "confinement stability", ok,
                           {"zeta2_max": z2max, "C_eps20": C20, "C_eps40": C40, "C_ratio": q,
                            "zeta2_C_eps20": r20.zeta2_C, "zeta2_C_eps40": r40.zeta2_C},
                           "max zeta2 = %.3g (< pi/2); lower-bound C %.3g vs %.3g (ratio %.2f, "
                           "limit 2)" % (z2max, C20, C40, q))


def criterion(n, rings=None):
    """Evaluate criterion ``n``; 7-10 need ``rings`` = (result R0/20, result R0/40)."""
    cheap = {1: _c1, 2: _c2, 3: _c3, 4: _c4, 5: _c5, 6: _c6}
    if n in cheap:
        return cheap[n]()
    if rings is None:
        raise ValueError("criterion %d needs the ring runs" % n)
    r20, r40 = rings
    if n == 7:
        return _c7(r40)
    if n == 8:
        return _c8(r20, r40)
    if n == 9:
        return _c9(r20, r40)
    if n == 10:
        return _c10(r20, r40)
    raise ValueError("no criterion %d" % n)


def evaluate(numbers=ALL, rings=None, cache_dir=None, progress=None):
    """Evaluate the listed criteria, running the ring pair if needed."""
    if rings is None and any(n >= 7 for n in numbers):
        rings = ring_pair(cache_dir, progress)
    return [criterion(n, rings) for n in numbers]
