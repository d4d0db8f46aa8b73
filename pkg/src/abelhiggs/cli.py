"""Command-line pipeline: profile, minimize2d, surface, init, evolve, analyze, report.

Every subcommand takes ``--config <json>`` (optional where defaults
suffice), ``--out <dir>``, ``--threads <n>`` and ``--seed <u64>``, and
writes a manifest next to its outputs.  Exit codes: 0 success,
1 configuration error, 2 numerical failure, 3 acceptance failure.
"""

import argparse
import json
import math
import os
import sys
import time

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, problems):
        self.problems = problems
        super().__init__("; ".join("%s: %s" % p for p in problems))


# ---------------------------------------------------------------------------
# configuration schemas: name -> (type, default, check, message)


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


SCHEMAS = {
    "profile": {
        "n": (int, 1, lambda v: v != 0, "must be a nonzero integer"),
        "lambda": (float, 1.0, _pos, "must be positive"),
        "r_max": (float, 20.0, lambda v: v >= 10, "must be at least 10"),
        "dr": (float, 0.01, lambda v: 0 < v <= 0.25, "must lie in (0, 0.25]"),
        "epsilon": (float, 1.0, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    },
    "minimize2d": {
        "lambda": (list, [1.0, 2.0], lambda v: len(v) > 0 and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in v),
            "must be a nonempty list of positive numbers"),
        "n_max": (int, 3, lambda v: 1 <= v <= 5, "must lie in 1..5"),
        "h": (float, 0.25, lambda v: 0 < v <= 0.25, "must lie in (0, 0.25] (the error bar also runs at 2h)"),
        "tol": (float, 1e-6, _pos, "must be positive"),
    },
    "surface": {
        "circle": (float, 1.0, _pos, "must be positive"),
        "curve_csv": (str, "", None, ""),
        "modes": (int, 64, lambda v: v >= 4, "must be at least 4"),
        "T": (float, 0.8, _pos, "must be positive"),
        "rho0": (float, 0.45, _pos, "must be positive"),
        "samples": (int, 64, lambda v: v >= 8, "must be at least 8"),
    },
    "report": {
        "criteria": (list, list(range(1, 11)), lambda v: len(v) > 0 and all(
            isinstance(x, int) and 1 <= x <= 10 for x in v), "must list integers in 1..10"),
        "cache": (str, "", None, ""),
    },
}


def _typed(value, typ):
    if typ is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if typ is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, typ)


def validate_section(raw, schema, prefix=""):
    """Typed values for every schema field; raises ConfigError listing all problems."""
    problems = []
    for key in sorted(set(raw) - set(schema)):
        problems.append((prefix + key, "unknown field"))
    out = {}
    for key, (typ, default, check, msg) in schema.items():
        v = raw.get(key, default)
        if not _typed(v, typ):
            problems.append((prefix + key, "must be of type %s" % typ.__name__))
            continue
        if typ is float:
            v = float(v)
            if not math.isfinite(v):
                problems.append((prefix + key, "must be finite"))
                continue
        if check is not None and not check(v):
            problems.append((prefix + key, msg))
            continue
        out[key] = v
    if problems:
        raise ConfigError(problems)
    return out


def ring_config(raw):
    """RingConfig from a JSON object, reporting every invalid field."""
    from dataclasses import fields
    from .scenario import RingConfig
    problems = []
    types = {f.name: f.type for f in fields(RingConfig)}
    for key in sorted(set(raw) - set(types)):
        problems.append(("ring." + key, "unknown field"))
    clean = {}
    for key, v in raw.items():
        if key not in types:
            continue
        typ = {"float": float, "int": int, "bool": bool}.get(
            types[key] if isinstance(types[key], str) else types[key].__name__, float)
        if typ is bool:
            ok = isinstance(v, bool)
        else:
            ok = _typed(v, typ) and (typ is not float or math.isfinite(v))
        if not ok:
            problems.append(("ring." + key, "must be of type %s" % typ.__name__))
        else:
            clean[key] = float(v) if typ is float else v
    cfg = None
    if not problems:
        cfg = RingConfig(**clean)
        problems += [("ring." + k, m) for k, m in cfg.validate()]
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError([("--config", "cannot read %s (%s)" % (path, exc.strerror))])
    except json.JSONDecodeError as exc:
        raise ConfigError([("--config", "invalid JSON: %s" % exc)])
    if not isinstance(raw, dict):
        raise ConfigError([("--config", "top level must be a JSON object")])
    return raw


_STRUCTURAL = {"input", "ring"} | set(SCHEMAS)


def _section(raw, name):
    """The subcommand's section: raw[name], or else the top level minus
    the keys that name other sections."""
    if name in raw:
        sec = raw[name]
    elif name == "ring":
        sec = {}
    else:
        sec = {k: v for k, v in raw.items() if k not in _STRUCTURAL}
    if not isinstance(sec, dict):
        raise ConfigError([(name, "must be a JSON object")])
    return dict(sec)


# ---------------------------------------------------------------------------
# subcommands


class Context:
    def __init__(self, args, raw):
        self.args = args
        self.raw = raw
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.t0 = time.time()

    def path(self, name):
        return os.path.join(self.out, name)

    def say(self, msg):
        if not self.args.quiet:
            print(msg, flush=True)

    def manifest(self, stage, config, results):
        from .runio import code_version, write_json
        write_json(self.path("manifest_%s.json" % stage), {
            "stage": stage, "config": config, "code_version": code_version(),
            "threads": self.args.threads, "seed": self.args.seed,
            "elapsed_s": round(time.time() - self.t0, 3), "results": results,
        })


def cmd_profile(ctx):
    import numpy as np
    from .vortex2d import solve_profile
    sec = dict(_section(ctx.raw, "profile"))
    if ctx.args.n is not None:
        sec["n"] = ctx.args.n
    if ctx.args.lam is not None:
        sec["lambda"] = ctx.args.lam
    cfg = validate_section(sec, SCHEMAS["profile"], "profile.")
    p = solve_profile(cfg["n"], cfg["lambda"], r_max=cfg["r_max"], dr=cfg["dr"])
    E = p.energy()
    eps = cfg["epsilon"]
    with open(ctx.path("profile.csv"), "w") as fh:
        fh.write("r,f,a\n")
        for r, f, a in zip(eps * p.r, p.f, p.a):
            fh.write("%.10g,%.15g,%.15g\n" % (r, f, a))
    res = {"n": cfg["n"], "lambda": cfg["lambda"], "energy": E,
           "energy_over_pi_n": E / (math.pi * abs(cfg["n"])),
           "bps_defects": [float(x) for x in np.atleast_1d(p.bps_defects())]}
    ctx.manifest("profile", cfg, res)
    ctx.say("profile n=%d lambda=%g: energy %.8f = %.6f pi|n|"
            % (cfg["n"], cfg["lambda"], E, res["energy_over_pi_n"]))
    return EXIT_OK


def cmd_minimize2d(ctx):
    from .vortex2d import energy_table
    cfg = validate_section(_section(ctx.raw, "minimize2d"), SCHEMAS["minimize2d"], "minimize2d.")
    rows = ["n,lambda,energy,error,energy_over_pi_n"]
    res = {}
    for lam in cfg["lambda"]:
        t = energy_table(float(lam), n_max=cfg["n_max"], h=cfg["h"], tol=cfg["tol"])
        for n, e, err in zip(t.n, t.energy, t.error):
            rows.append("%d,%.6g,%.12g,%.3g,%.8f" % (n, lam, e, err, e / (math.pi * n)))
            ctx.say("lambda=%g n=%d: E = %.8f +- %.1e" % (lam, n, e, err))
        res["lambda=%g" % lam] = {"energy": t.energy, "error": t.error,
                                  "monotone": t.is_monotone()}
    with open(ctx.path("energy_table.csv"), "w") as fh:
        fh.write("\n".join(rows) + "\n")
    ctx.manifest("minimize2d", cfg, res)
    return EXIT_OK


def cmd_surface(ctx):
    import numpy as np
    from .snapshot import KIND_METRIC, write_snapshot
    from .worldsheet import (NormalChart, build_surface, circle, mean_curvature_residual,
                             metric_in_chart, read_curve_csv, validity_radii)
    cfg = validate_section(_section(ctx.raw, "surface"), SCHEMAS["surface"], "surface.")
    curve = read_curve_csv(cfg["curve_csv"], cfg["modes"]) if cfg["curve_csv"] else circle(cfg["circle"])
    ws = build_surface(curve, cfg["T"])
    chart = NormalChart(ws, rho0=cfg["rho0"])
    n = cfg["samples"]
    step = curve.L / n
    n0 = 2 * int(cfg["T"] / step) + 1
    y0 = -(n0 // 2) * step + step * np.arange(n0)
    y1 = step * np.arange(n)
    Y0, Y1 = np.meshgrid(y0, y1, indexing="ij")
    g00, g01, g11 = ws.gamma(Y0, Y1)
    conformal = float(max(np.abs(g01).max(), np.abs(g00 + g11).max()))
    mc = float(mean_curvature_residual(ws, Y0.ravel(), Y1.ravel()))
    Y = np.stack([Y0.ravel(), Y1.ravel(), 0 * Y0.ravel(), 0 * Y0.ravel()], axis=1)
    met = metric_in_chart(chart, Y)
    for a in range(4):
        for b in range(a, 4):
            write_snapshot(ctx.path("metric_g%d%d.ahvx" % (a, b)),
                           met.g[:, a, b].reshape(Y0.shape), step, (y0[0], 0.0),
                           KIND_METRIC + 4 * a + b)
    rho0, T1, c0 = validity_radii(chart)
    res = {"L": curve.L, "curve_hash": curve.digest(), "T1": float(T1), "rho0": float(rho0), "c0": float(c0),
           "conformal_residual": conformal, "mean_curvature_residual": mc,
           "b_nu_on_sheet": float(np.abs(met.b[:, 2:]).max())}
    ctx.manifest("surface", cfg, res)
    ctx.say("surface: L = %.6f, T1 = %.4f, rho0 = %.4f, conformal %.1e, mean curvature %.1e"
            % (curve.L, T1, rho0, conformal, mc))
    return EXIT_OK


def _ring(ctx):
    return ring_config(_section(ctx.raw, "ring"))


def _input_dir(ctx):
    d = ctx.raw.get("input", ctx.out)
    if not isinstance(d, str):
        raise ConfigError([("input", "must be a directory path")])
    return d


def cmd_init(ctx):
    from dataclasses import asdict
    from .initdata import tube_winding
    from .runio import save_config2d, save_state
    from .scenario import setup_ring
    cfg = _ring(ctx)
    setup = setup_ring(cfg, ctx.say)
    d = setup.data
    save_state(ctx.out, "init", d.state)
    save_config2d(ctx.out, "cross_section", setup.truncated)
    with open(ctx.path("init_manifest.json"), "w") as fh:
        fh.write(d.manifest(setup.chart.curve))
    res = {"energy": d.energy, "energy_2d": setup.energy_2d, "t_lab": setup.t_lab,
           "box": [[b.start, b.stop] for b in setup.box], "tube_radius": d.tube_radius,
           "R0": d.R0, "truncation_energy_after": setup.report.energy_after,
           "truncation_change": setup.report.energy_change, "tube_winding": tube_winding(d)}
    ctx.manifest("init", asdict(cfg), res)
    ctx.say("init: energy %.8f, grid %s, lab time %.4f" % (d.energy, d.state.grid.dims, setup.t_lab))
    return EXIT_OK


def cmd_evolve(ctx):
    from dataclasses import asdict
    import numpy as np
    from .runio import load_state, read_json, save_state, write_json
    from .scenario import evolve_ring
    cfg = _ring(ctx)
    src = _input_dir(ctx)
    try:
        init = read_json(os.path.join(src, "manifest_init.json"))
        st0 = load_state(src, "init")
    except OSError:
        raise ConfigError([("input", "no init output in %s (run init first)" % src)])
    if init["config"] != asdict(cfg):
        raise ConfigError([("ring", "differs from the configuration used by init in %s" % src)])
    r = init["results"]
    rr, zz = st0.grid.mesh()
    dist = np.maximum(np.hypot(rr - r["R0"], zz) - r["tube_radius"], 0.0)
    box = tuple(slice(a, b) for a, b in r["box"])
    run = evolve_ring(cfg, st0, dist, box, r["t_lab"], ctx.say)
    sdir = ctx.path("snapshots")
    os.makedirs(sdir, exist_ok=True)
    store = run.store
    for k, (t, arrays) in enumerate(zip(store.times, store.states)):
        save_state(sdir, "s%05d" % k, st0.copy(t=t), arrays=arrays, origin=store.origin)
    ldir = ctx.path("lab")
    os.makedirs(ldir, exist_ok=True)
    for k, s in sorted(run.lab_states.items()):
        save_state(ldir, "l%07d" % k, s)
    with open(ctx.path("monitors.csv"), "w") as fh:
        fh.write("t,energy,gauss_l2\n")
        for t, E, g in run.monitors:
            fh.write("%.17g,%.17g,%.17g\n" % (t, E, g))
    with open(ctx.path("cores.csv"), "w") as fh:
        fh.write("t,R,z\n")
        for t, R, z in run.cores:
            fh.write("%.17g,%.17g,%.17g\n" % (t, R, z))
    res = {k: getattr(run, k) for k in ("dt", "steps", "t_final", "energy0", "energy_drift",
                                         "energy_drift_lab", "gauss_l2_max", "silent_max",
                                         "time_reversal")}
    res.update(snapshots=len(store.times), snapshot_box=[[b.start, b.stop] for b in store.box],
               lab_steps=sorted(run.lab_states), timings=run.timings)
    write_json(ctx.path("evolve_summary.json"), res)
    ctx.manifest("evolve", asdict(cfg), res)
    ctx.say("evolve: drift %.2e, Gauss %.2e, silent %.2e, reversal %.2e"
            % (run.energy_drift, run.gauss_l2_max, run.silent_max, run.time_reversal))
    if not all(math.isfinite(v) for v in (run.energy_drift, run.gauss_l2_max)):
        return EXIT_NUMERIC
    return EXIT_OK


def _load_run(src, cfg):
    import numpy as np
    from .diagnostics import SnapshotStore
    from .runio import load_state, read_json
    from .scenario import RingRun
    ev = read_json(os.path.join(src, "evolve_summary.json"))
    st0 = load_state(src, "init")
    box = tuple(slice(a, b) for a, b in ev["snapshot_box"])
    store = SnapshotStore(st0.grid, st0.mode, box, halo=0)
    sdir = os.path.join(src, "snapshots")
    for k in range(ev["snapshots"]):
        meta, phi, pi, a, e = load_state(sdir, "s%05d" % k, grid=st0.grid)
        store.times.append(meta["t"])
        store.states.append((phi, pi, a, e))
    lab = {k: load_state(os.path.join(src, "lab"), "l%07d" % k) for k in ev["lab_steps"]}
    cores = np.atleast_2d(np.loadtxt(os.path.join(src, "cores.csv"), delimiter=",", skiprows=1))
    mon = np.atleast_2d(np.loadtxt(os.path.join(src, "monitors.csv"), delimiter=",", skiprows=1))
    return RingRun(store, lab, [tuple(c) for c in cores], ev["dt"], ev["steps"], ev["t_final"],
                   ev["energy0"], ev["energy_drift"], ev["energy_drift_lab"], ev["gauss_l2_max"],
                   ev["silent_max"], ev["time_reversal"], [tuple(m) for m in mon],
                   ev.get("timings", {}))


def cmd_analyze(ctx):
    from dataclasses import asdict
    from .diagnostics import records_csv, summary_json
    from .runio import load_config2d, read_json
    from .scenario import analyze_ring, ring_chart
    cfg = _ring(ctx)
    src = _input_dir(ctx)
    try:
        init = read_json(os.path.join(src, "manifest_init.json"))
        run = _load_run(src, cfg)
        ut = load_config2d(src, "cross_section")
    except OSError:
        raise ConfigError([("input", "no evolve output in %s (run init and evolve first)" % src)])
    if init["config"] != asdict(cfg):
        raise ConfigError([("ring", "differs from the configuration used by init in %s" % src)])
    r = init["results"]
    result = analyze_ring(cfg, ring_chart(cfg), ut, run, r["truncation_energy_after"],
                          r["truncation_change"], r["tube_winding"], ctx.say)
    records_csv(result.records(), ctx.path("diagnostics.csv"))
    with open(ctx.path("ring_result.json"), "w") as fh:
        fh.write(result.to_json())
    _ring_plots(ctx, [result])
    summary = {"ng_max_rel": result.ng_max_rel, "zeta1_0": result.zeta1[0],
               "zeta3_integral": result.zeta3_integral, "exterior_at": result.exterior_at,
               "weighted_tube_integral": result.weighted_tube_integral,
               "profile_at": result.profile_at, "max_zeta2": max(result.zeta2),
               "prop1_C": result.prop1_C, "zeta2_C": result.zeta2_C}
    summary_json(summary, ctx.path("summary.json"))
    ctx.manifest("analyze", asdict(cfg), summary)
    ctx.say("analyze: Nambu-Goto max rel. error %.2e, zeta1(0) %.3e, max zeta2 %.3e"
            % (result.ng_max_rel, result.zeta1[0], max(result.zeta2)))
    return EXIT_OK


def _ring_plots(ctx, results):
    import numpy as np
    from .diagnostics import svg_plot
    tag = lambda r: "eps=1/%g" % round(1 / r.config["epsilon"])
    svg_plot({tag(r): (r.monitor_t, np.abs(np.asarray(r.monitor_energy) / r.energy0 - 1))
              for r in results}, ctx.path("energy_drift.svg"), "relative energy drift",
             ylabel="|E/E0 - 1|", logy=True)
    series = {}
    for r in results:
        series["R(t) " + tag(r)] = (r.core_t, r.core_R)
    t = np.linspace(0, max(max(r.core_t) for r in results), 100)
    series["R0 cos(t/R0)"] = (t, results[0].config["R0"] * np.cos(t / results[0].config["R0"]))
    svg_plot(series, ctx.path("ring_radius.svg"), "ring radius vs Nambu-Goto", ylabel="R")
    zs = {}
    for r in results:
        zs["zeta1 " + tag(r)] = (r.slices, np.abs(r.zeta1))
        zs["zeta2 " + tag(r)] = (r.slices, r.zeta2)
        zs["zeta3 " + tag(r)] = (r.slices, r.zeta3)
    svg_plot(zs, ctx.path("zeta.svg"), "zeta functionals", ylabel="value", logy=True)


def cmd_report(ctx):
    import numpy as np
    from .acceptance import evaluate
    from .diagnostics import records_csv, summary_json, svg_plot
    sec = _section(ctx.raw, "report")
    ring_raw = ctx.raw.get("ring", {})
    if not isinstance(ring_raw, dict):
        raise ConfigError([("ring", "must be a JSON object")])
    cfg = validate_section(sec, SCHEMAS["report"], "report.")
    overrides = {}
    if ring_raw:
        probe = ring_config(dict(ring_raw, epsilon=1 / 40))
        overrides = {k: getattr(probe, k) for k in ring_raw if k != "epsilon"}
    cache = cfg["cache"] or None
    crit = sorted(set(cfg["criteria"]))
    rings = None
    if any(n >= 7 for n in crit):
        from .acceptance import ring_pair
        rings = ring_pair(cache, ctx.say, **overrides)
        for r in rings:
            name = "eps%d" % round(1 / r.config["epsilon"])
            records_csv(r.records(), ctx.path("diagnostics_%s.csv" % name))
        _ring_plots(ctx, list(rings))
        r20, r40 = rings
        from .acceptance import SCALING
        eps = np.array([r20.config["epsilon"], r40.config["epsilon"]])
        svg_plot({name: (eps, [abs(get(r20)), abs(get(r40))]) for name, get in SCALING}
                 | {"eps^2": (eps, eps ** 2)}, ctx.path("eps_scaling.svg"),
                 "epsilon scaling (log y)", xlabel="epsilon", logy=True)
    results = evaluate(crit, rings=rings)
    for c in results:
        ctx.say(c.line())
    out = {"criteria": [c.to_dict() for c in results],
           "passed": [c.number for c in results if c.passed],
           "failed": [c.number for c in results if not c.passed]}
    summary_json(out, ctx.path("report.json"))
    ctx.manifest("report", {"criteria": crit, "cache": cache, "ring": overrides},
                 {"passed": out["passed"], "failed": out["failed"]})
    return EXIT_OK if not out["failed"] else EXIT_ACCEPT


COMMANDS = {
    "profile": (cmd_profile, "equivariant vortex profile and its energy (CSV)"),
    "minimize2d": (cmd_minimize2d, "lattice minimal-energy table E_n"),
    "surface": (cmd_surface, "Nambu-Goto worldsheet and normal-chart validity report"),
    "init": (cmd_init, "ring initial data (AHVX) and manifest"),
    "evolve": (cmd_evolve, "time evolution with snapshots and monitors"),
    "analyze": (cmd_analyze, "diagnostics from stored snapshots"),
    "report": (cmd_report, "acceptance suite with JSON and SVG output"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="abelhiggs", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", default=".", help="output directory (default: .)")
        s.add_argument("--threads", type=int, default=1, help="worker threads for BLAS/FFT")
        s.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        s.add_argument("--quiet", action="store_true", help="suppress progress output")
        if name == "profile":
            s.add_argument("--n", type=int, help="winding number")
            s.add_argument("--lambda", dest="lam", type=float, help="coupling lambda")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1 or not 0 <= args.seed < 2 ** 64:
        bad = []
        if args.threads < 1:
            bad.append("--threads: must be a positive integer")
        if not 0 <= args.seed < 2 ** 64:
            bad.append("--seed: must be an unsigned 64-bit integer")
        print("configuration error:\n  " + "\n  ".join(bad), file=sys.stderr)
        return EXIT_CONFIG
    # thread pools read these when numpy/scipy first load
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    import numpy as np
    func = COMMANDS[args.command][0]
    try:
        raw = load_config(args.config)
        return func(Context(args, raw))
    except ConfigError as exc:
        print("configuration error:\n  " + "\n  ".join("%s: %s" % p for p in exc.problems),
              file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print("numerical failure in %s: %s" % (_origin(exc), exc), file=sys.stderr)
        return EXIT_NUMERIC


def _origin(exc):
    """Innermost package module on the traceback."""
    tb = exc.__traceback__
    name = "abelhiggs"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("abelhiggs"):
            name = mod
        tb = tb.tb_next
    return name


if __name__ == "__main__":
    sys.exit(main())
