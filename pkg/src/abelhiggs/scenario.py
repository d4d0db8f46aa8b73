"""The collapsing circular string: one configurable end-to-end experiment.

``run_ring`` chains three stages: ``setup_ring`` minimizes the 2D vortex,
truncates it and assembles the axisymmetric ring; ``evolve_ring`` evolves
it with snapshots around the tube; ``analyze_ring`` evaluates every
diagnostic.  The returned ``RingResult`` is plain data
(JSON-serializable) and can be cached on disk keyed by the configuration.
"""

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .diagnostics import (
    DiagnosticsRecord, LabSampler, SnapshotStore, compare_nambu_goto, profile_comparison,
    pullback_cross_sections, reference_cross_section, track_cores, tube_coordinates, zeta,
)
from .evolve import Evolver, state_distance
from .initdata import assemble_axisymmetric, ring_grid, truncate_minimizer, tube_winding
from .lattice import Grid, fsum
from .vortex2d import minimize2d
from .worldsheet import NormalChart, build_surface, circle

__all__ = ["RingConfig", "RingResult", "RingSetup", "RingRun", "ring_chart", "setup_ring",
           "evolve_ring", "analyze_ring", "run_ring", "load_or_run"]

log = logging.getLogger(__name__)


def _source_digest():
    here = os.path.dirname(os.path.abspath(__file__))
    h = hashlib.sha256()
    for name in sorted(os.listdir(here)):
        if name.endswith(".py"):
            with open(os.path.join(here, name), "rb") as fh:
                h.update(name.encode() + fh.read())
    return h.hexdigest()


@dataclass
class RingConfig:
    epsilon: float = 1 / 40
    R0: float = 1.0
    lam: float = 1.0
    m: int = 1
    h_ratio: int = 4            # h = epsilon / h_ratio
    cfl: float = 0.5
    rho1: float = 0.9
    guard: float = 6.0          # tail guard rho1/3 >= guard * epsilon
    truncation_bound: float = 1e-4
    T_run: float = 0.5
    slice_step: float = 0.05    # chart-time spacing of diagnostic slices
    kappa2: float = 1.0
    snapshot_every: int = 2
    core_every: int = 4
    t_exterior: float = 0.3
    t_profile: float = 0.3
    minimize_tol: float = 1e-8
    wrong_winding_control: bool = True

    def validate(self):
        """List of (field, message) for every violated constraint."""
        bad = []
        if not (isinstance(self.epsilon, (int, float)) and 0 < self.epsilon <= 1):
            bad.append(("epsilon", "must lie in (0, 1]"))
        if not self.R0 > 0:
            bad.append(("R0", "must be positive"))
        if not self.lam > 0:
            bad.append(("lam", "must be positive"))
        if not (isinstance(self.m, int) and self.m != 0):
            bad.append(("m", "must be a nonzero integer"))
        if not (isinstance(self.h_ratio, int) and self.h_ratio >= 2):
            bad.append(("h_ratio", "must be an integer >= 2"))
        if not 0 < self.cfl <= 0.5:
            bad.append(("cfl", "must lie in (0, 0.5]"))
        if not 0 < self.rho1 < self.R0:
            bad.append(("rho1", "must lie in (0, R0)"))
        if not 0 < self.T_run < 0.5 * math.pi * self.R0:
            bad.append(("T_run", "must lie in (0, pi R0 / 2)"))
        if not 0 < self.slice_step <= self.T_run:
            bad.append(("slice_step", "must lie in (0, T_run]"))
        if not self.kappa2 >= 0:
            bad.append(("kappa2", "must be nonnegative"))
        for name in ("snapshot_every", "core_every"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                bad.append((name, "must be a positive integer"))
        for name in ("t_exterior", "t_profile"):
            if not 0 <= getattr(self, name) <= self.T_run:
                bad.append((name, "must lie in [0, T_run]"))
        if isinstance(self.epsilon, (int, float)) and self.epsilon > 0 and self.R0 > 0 \
                and isinstance(self.h_ratio, int) and self.h_ratio > 0:
            k = self.R0 * self.h_ratio / self.epsilon
            if abs(k - round(k)) > 1e-8:
                bad.append(("epsilon", "R0 / h must be an integer for the axisymmetric layout"))
        return bad

    @property
    def h(self):
        return self.epsilon / self.h_ratio

    def key(self):
        """Cache key: the configuration plus a digest of the package source."""
        blob = json.dumps(asdict(self), sort_keys=True) + __version__ + _source_digest()
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError("unknown config fields: %s" % ", ".join(unknown))
        return cls(**d)


@dataclass
class RingResult:
    config: dict
    energy0: float
    energy_ref: float               # minimal 2D energy through the diagnostic quadrature
    energy_2d_lattice: float
    truncation_change: float
    tube_winding: int
    grid_dims: list
    dt: float
    steps: int
    t_lab: float
    energy_drift: float             # max relative drift over [0, T_run]
    energy_drift_lab: float         # same over the whole lab run
    gauss_l2_max: float             # max over the run of the L2 residual / energy0
    silent_max: float
    time_reversal: float
    core_t: list
    core_R: list
    core_z: list
    ng_max_rel: float
    slices: list                    # chart times
    zeta1: list
    zeta2: list
    zeta3: list
    zeta3_integral: float
    disk_energy: list               # per slice, per section
    confinement: list
    lab_t: list
    exterior: list
    weighted_tube: list
    weighted_tube_integral: float
    exterior_at: float
    profile_at: float
    profile_wrong_winding: float
    profile_t0: float
    zeta2_C: float
    prop1_C: float
    profile: list = field(default_factory=list)         # per slice
    monitor_t: list = field(default_factory=list)
    monitor_energy: list = field(default_factory=list)
    monitor_gauss: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def records(self):
        out = []
        for k, s in enumerate(self.slices):
            r = DiagnosticsRecord(s, self.zeta1[k], self.zeta2[k], self.zeta3[k])
            r.confinement_integral = float(np.mean(np.abs(self.confinement[k])))
            if k < len(self.lab_t):
                r.zeta4 = r.exterior_energy = self.exterior[k]
                r.weighted_tube_energy = self.weighted_tube[k]
            j = int(np.argmin(np.abs(np.asarray(self.core_t) - s)))
            r.core_positions = [(self.core_R[j], self.core_z[j])]
            out.append(r)
        return out

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def _snapshot_box(chart, grid, cfg):
    """Index box and lab-time reach of all chart points used by the slices."""
    s = np.linspace(0, cfg.T_run, 41)
    th = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    r = cfg.rho1 / 2
    S, TH = np.meshgrid(s, th, indexing="ij")
    Y = np.stack([S.ravel(), 0 * S.ravel(), r * np.cos(TH.ravel()), r * np.sin(TH.ravel())], 1)
    X = chart.forward(Y)
    rho = np.hypot(X[:, 1], X[:, 2])
    h = grid.spacing
    pad = 6 * h
    lo = [(rho.min() - pad - grid.origin[0]) / h, (X[:, 3].min() - pad - grid.origin[1]) / h]
    hi = [(rho.max() + pad - grid.origin[0]) / h, (X[:, 3].max() + pad - grid.origin[1]) / h]
    box = tuple(slice(max(0, int(math.floor(l))), min(n, int(math.ceil(u)) + 1))
                for l, u, n in zip(lo, hi, grid.dims))
    return box, float(X[:, 0].max())


def _trapz(y, x):
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x))) if len(x) > 1 else 0.0


@dataclass
class RingSetup:
    """Everything the evolution needs: chart, cross-section, initial data."""
    cfg: RingConfig
    chart: NormalChart
    truncated: object           # LatticeConfig2D, the truncated cross-section
    report: object              # TruncationReport
    data: object                # InitialData
    box: tuple                  # snapshot index box
    t_lab: float                # lab time the run must reach
    energy_2d: float            # minimal 2D lattice energy before truncation
    timings: dict = field(default_factory=dict)


@dataclass
class RingRun:
    """Output of the evolution stage."""
    store: SnapshotStore
    lab_states: dict            # step -> state on the lab slices t = k slice_step
    cores: list                 # (t, R, z) of the core nearest z = 0
    dt: float
    steps: int
    t_final: float
    energy0: float
    energy_drift: float
    energy_drift_lab: float
    gauss_l2_max: float
    silent_max: float
    time_reversal: float
    monitors: list = field(default_factory=list)       # (t, energy, Gauss L2) samples
    timings: dict = field(default_factory=dict)


def ring_chart(cfg):
    """Normal chart of the collapsing circle, valid past the diagnostic window."""
    T1 = min(cfg.T_run + 0.3 * cfg.R0, 0.45 * math.pi * cfg.R0)
    ws = build_surface(circle(cfg.R0), T1)
    return NormalChart(ws, rho0=min(cfg.rho1, 0.5 * cfg.R0))


def _check(cfg):
    bad = cfg.validate()
    if bad:
        raise ValueError("; ".join("%s: %s" % b for b in bad))


def setup_ring(cfg, progress=None):
    """Minimize and truncate the cross-section, then assemble the ring."""
    _check(cfg)
    say = progress or (lambda msg: log.info(msg))
    eps, h = cfg.epsilon, cfg.h
    chart = ring_chart(cfg)
    t0 = time.time()
    g2 = Grid.centered(cfg.rho1 / 2 + 8 * h + 4 * eps, h, cell_centered=True)
    res = minimize2d(cfg.m, cfg.lam, g2, epsilon=eps, tol=cfg.minimize_tol, return_result=True)
    ut, rep = truncate_minimizer(res.config, cfg.rho1, guard=cfg.guard, bound=cfg.truncation_bound)
    tm = {"minimize": time.time() - t0}
    say("2D minimizer: E/pi = %.6f (%.1f s)" % (res.energy / math.pi, tm["minimize"]))
    grid = ring_grid(cfg.R0, eps, cfg.rho1, 1.0, h=h)
    _, t_need = _snapshot_box(chart, grid, cfg)
    t_lab = t_need + 4 * cfg.snapshot_every * cfg.cfl * h
    grid = ring_grid(cfg.R0, eps, cfg.rho1, t_lab, h=h)
    box, _ = _snapshot_box(chart, grid, cfg)
    data = assemble_axisymmetric(ut, cfg.R0, grid, report=rep, rho1=cfg.rho1)
    return RingSetup(cfg, chart, ut, rep, data, box, t_lab, res.energy, tm)


def evolve_ring(cfg, state0, distance, box, t_lab, progress=None):
    """Evolve to ``t_lab`` with snapshots, core tracking and monitors."""
    _check(cfg)
    say = progress or (lambda msg: log.info(msg))
    h, m = cfg.h, cfg.m
    dt = cfg.cfl * h
    ev = Evolver(state0, dt, cfl=cfg.cfl, distance=distance)
    ev.check_box(t_lab)
    n_lab = int(math.ceil(t_lab / dt))
    n_run = int(round(cfg.T_run / dt))
    E0, _ = ev.total_energy(state0)

    store = SnapshotStore(state0.grid, state0.mode, box)
    store.add(state0)
    cores = [(0.0, track_cores(state0, m))]
    lab_times = [k * cfg.slice_step for k in range(int(round(cfg.T_run / cfg.slice_step)) + 1)]
    lab_steps = {int(round(t / dt)) for t in lab_times}
    lab_states = {0: state0}
    mon = {"run": 0.0, "lab": 0.0, "gauss": 0.0}
    run_state = {}
    monitors = [(0.0, E0, ev.gauss_residual(state0)[1])]

    def cb(s, k):
        if k % cfg.snapshot_every == 0:
            store.add(s)
        E, _ = ev.total_energy(s)
        _, l2, _ = ev.gauss_residual(s)
        if k % cfg.core_every == 0:
            monitors.append((s.t, E, l2))
            if s.t <= cfg.T_run + 1e-12:
                cores.append((s.t, track_cores(s, m)))
        d = abs(E / E0 - 1)
        mon["lab"] = max(mon["lab"], d)
        if k <= n_run:
            mon["run"] = max(mon["run"], d)
            mon["gauss"] = max(mon["gauss"], l2 / E0)
        ev.silent_max = max(ev.silent_max, ev.silent_change(s))
        if k in lab_steps:
            lab_states[k] = s
        if k == n_run:
            run_state["s"] = s

    t0 = time.time()
    final = ev.run(state0, n_lab, callback=cb, monitor_every=0)
    tm = {"evolve": time.time() - t0}
    say("evolved %d steps to t = %.3f (%.1f s)" % (n_lab, final.t, tm["evolve"]))

    # time reversal over the certified run
    t0 = time.time()
    back = ev.time_reverse(run_state["s"])
    rv = Evolver(back, dt, cfl=cfg.cfl)
    back = rv.time_reverse(rv.run(back, n_run, monitor_every=0))
    reversal = state_distance(back, state0)
    tm["reverse"] = time.time() - t0

    track = []
    for t, cs in cores:
        best = min(cs, key=lambda c: abs(c.position[1]))
        track.append((t, best.position[0], best.position[1]))
    return RingRun(store, lab_states, track, dt, n_lab, final.t, E0, mon["run"], mon["lab"],
                   mon["gauss"], ev.silent_max, reversal, monitors, tm)


def analyze_ring(cfg, chart, truncated, run, energy_2d_lattice=float("nan"),
                 truncation_change=float("nan"), tube_winding=0, progress=None):
    """Chart slices, lab-slice energies and core comparison of an evolved run."""
    _check(cfg)
    say = progress or (lambda msg: log.info(msg))
    eps, h, lam, m = cfg.epsilon, cfg.h, cfg.lam, cfg.m
    tm = {}
    ct = [c[0] for c in run.cores]
    cR = [c[1] for c in run.cores]
    cz = [c[2] for c in run.cores]
    _, ng = compare_nambu_goto(ct, cR, cfg.R0)

    t0 = time.time()
    sampler = LabSampler(run.store)
    r = cfg.rho1 / 2
    ref = reference_cross_section(truncated, r, h)
    Eref = ref.integral(ref.e_nu(eps, lam))
    L = 2 * math.pi * cfg.R0
    lab_times = [k * cfg.slice_step for k in range(int(round(cfg.T_run / cfg.slice_step)) + 1)]
    z1, z2, z3, de, cf, prof = [], [], [], [], [], []
    prof_at = prof_wrong = prof0 = float("nan")
    wrong_ref = None
    if cfg.wrong_winding_control:
        g2 = truncated.grid
        res2 = minimize2d(m + int(math.copysign(1, m)), lam, g2, epsilon=eps,
                          tol=cfg.minimize_tol, return_result=True)
        wrong_ref = reference_cross_section(res2.config, r, h)
    for s in lab_times:
        cs = pullback_cross_sections(sampler, chart, s, r, h)
        zv = zeta(cs, L, eps, lam, m, r, Eref, cfg.kappa2)
        z1.append(zv.zeta1)
        z2.append(zv.zeta2)
        z3.append(zv.zeta3)
        de.append(zv.disk_energy)
        cf.append(zv.confinement)
        prof.append(profile_comparison(cs, ref, eps, lam))
        if abs(s) < 1e-12:
            prof0 = prof[-1]
        if abs(s - cfg.t_profile) < 1e-9:
            prof_at = prof[-1]
            if wrong_ref is not None:
                prof_wrong = profile_comparison(cs, wrong_ref, eps, lam)
    tm["slices"] = time.time() - t0

    # lab slices: exterior and weighted tube energy
    t0 = time.time()
    ext, wte, lt = [], [], []
    model = None
    for k in sorted(run.lab_states):
        s = run.lab_states[k]
        model = s.model() if model is None else model
        mask, y = tube_coordinates(chart, s, r)
        shares = model.site_shares(s.phi, s.a, s.pi, s.e)
        d2 = y[:, 2] ** 2 + y[:, 3] ** 2
        lt.append(s.t)
        ext.append(fsum(shares[~mask]))
        wte.append(fsum(d2 * shares[mask]))
    tm["lab"] = time.time() - t0
    ext_at = ext[int(np.argmin(np.abs(np.asarray(lt) - cfg.t_exterior)))]

    # confinement stability and the lower-bound witness
    z3i = [_trapz(z3[:k + 1], lab_times[:k + 1]) for k in range(len(lab_times))]
    ratios = [abs(z2[k] - z2[0]) / z3i[k] for k in range(1, len(lab_times)) if z3i[k] > 0]
    zeta2_C = max(ratios) if ratios else 0.0
    deficits = [max(0.0, Eref - e) for k in range(len(lab_times))
                for e, d in zip(de[k], cf[k]) if abs(d) < math.pi / 2]
    prop1_C = max(deficits, default=0.0) / eps ** 2
    say("diagnostics done (slices %.1f s, lab %.1f s)" % (tm["slices"], tm["lab"]))
    tm.update(run.timings)
    st0 = run.lab_states[0]
    return RingResult(
        config=asdict(cfg), energy0=run.energy0, energy_ref=Eref,
        energy_2d_lattice=energy_2d_lattice, truncation_change=truncation_change,
        tube_winding=int(tube_winding), grid_dims=list(st0.grid.dims), dt=run.dt,
        steps=run.steps, t_lab=run.t_final, energy_drift=run.energy_drift,
        energy_drift_lab=run.energy_drift_lab, gauss_l2_max=run.gauss_l2_max,
        silent_max=run.silent_max, time_reversal=run.time_reversal,
        core_t=ct, core_R=cR, core_z=cz, ng_max_rel=ng,
        slices=lab_times, zeta1=z1, zeta2=z2, zeta3=z3, zeta3_integral=z3i[-1],
        disk_energy=de, confinement=cf, lab_t=lt, exterior=ext, weighted_tube=wte,
        weighted_tube_integral=_trapz(wte, lt), exterior_at=ext_at,
        profile_at=prof_at, profile_wrong_winding=prof_wrong, profile_t0=prof0,
        zeta2_C=zeta2_C, prop1_C=prop1_C, profile=prof,
        monitor_t=[x[0] for x in run.monitors], monitor_energy=[x[1] for x in run.monitors],
        monitor_gauss=[x[2] for x in run.monitors], timings=tm,
    )


def run_ring(cfg, progress=None):
    """Run the ring experiment end to end; returns a RingResult."""
    setup = setup_ring(cfg, progress)
    data = setup.data
    run = evolve_ring(cfg, data.state, data.distance_from_tube(), setup.box, setup.t_lab, progress)
    res = analyze_ring(cfg, setup.chart, setup.truncated, run, setup.report.energy_after,
                       setup.report.energy_change, tube_winding(data), progress)
    res.timings.update(setup.timings)
    return res


def load_or_run(cfg, cache_dir=None, progress=None):
    """run_ring with an on-disk JSON cache keyed by the configuration."""
    cache_dir = cache_dir or os.environ.get("ABELHIGGS_CACHE")
    path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, "ring-%s.json" % cfg.key())
        if os.path.exists(path):
            with open(path) as fh:
                return RingResult(**json.load(fh))
    res = run_ring(cfg, progress)
    if path:
        with open(path, "w") as fh:
            fh.write(res.to_json())
    return res
