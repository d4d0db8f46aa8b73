"""Saving and loading pipeline stages as AHVX fields plus JSON manifests.

A state is stored as one AHVX file per field (phi, pi, one link file
and one link-rate file per axis) next to a small JSON sidecar holding
its time, couplings and mode.
"""

import json
import os
import subprocess

import numpy as np

from . import __version__
from .evolve import EvolutionState
from .lattice import Grid, LatticeConfig2D
from .snapshot import KIND_LINK, KIND_LINK_RATE, KIND_PHI, KIND_PI, read_snapshot, write_snapshot

__all__ = ["save_state", "load_state", "save_config2d", "load_config2d", "write_json",
           "read_json", "code_version"]


def code_version():
    """Package version plus ``git describe`` of the source tree when available."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        desc = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return __version__ + ("+" + desc if desc else "")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _plain(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _fields(prefix, ndim):
    names = [(prefix + ".phi.ahvx", KIND_PHI), (prefix + ".pi.ahvx", KIND_PI)]
    names += [(prefix + ".a%d.ahvx" % i, KIND_LINK + i) for i in range(ndim)]
    names += [(prefix + ".e%d.ahvx" % i, KIND_LINK_RATE + i) for i in range(ndim)]
    return names


def save_state(directory, prefix, state, arrays=None, origin=None):
    """Write ``state`` (or the sub-arrays ``arrays`` = (phi, pi, a, e) with
    their own ``origin``) under ``directory/prefix.*``."""
    phi, pi, a, e = arrays if arrays is not None else (state.phi, state.pi, state.a, state.e)
    g = state.grid
    origin = g.origin if origin is None else origin
    nd = phi.ndim
    data = [phi, pi] + [a[i] for i in range(nd)] + [e[i] for i in range(nd)]
    for (name, kind), arr in zip(_fields(prefix, nd), data):
        write_snapshot(os.path.join(directory, name), arr, g.spacing, origin, kind)
    write_json(os.path.join(directory, prefix + ".json"), {
        "t": state.t, "epsilon": state.epsilon, "lambda": state.lam, "mode": state.mode,
        "periodic": list(g.periodic), "dims": list(phi.shape), "origin": list(origin),
        "spacing": g.spacing,
    })


def load_state(directory, prefix, grid=None):
    """Read a state written by save_state.

    With ``grid`` given the arrays are returned raw as (meta, phi, pi, a, e)
    without building a state (used for sub-box snapshots).
    """
    meta = read_json(os.path.join(directory, prefix + ".json"))
    nd = len(meta["dims"])
    arrs = [read_snapshot(os.path.join(directory, name))[0] for name, _ in _fields(prefix, nd)]
    phi, pi = arrs[0], arrs[1]
    a = np.array(arrs[2:2 + nd])
    e = np.array(arrs[2 + nd:])
    if grid is not None:
        return meta, phi, pi, a, e
    g = Grid(tuple(meta["dims"]), meta["spacing"], tuple(meta["origin"]),
             tuple(meta["periodic"]))
    return EvolutionState(g, phi, pi, a, e, meta["epsilon"], meta["lambda"], meta["mode"],
                          t=meta["t"])


def save_config2d(directory, prefix, u):
    """Write a static 2D configuration (phi and links)."""
    g = u.grid
    write_snapshot(os.path.join(directory, prefix + ".phi.ahvx"), u.phi, g.spacing, g.origin,
                   KIND_PHI)
    for i in range(2):
        write_snapshot(os.path.join(directory, prefix + ".a%d.ahvx" % i), u.a[i], g.spacing,
                       g.origin, KIND_LINK + i)
    write_json(os.path.join(directory, prefix + ".json"), {
        "epsilon": u.epsilon, "lambda": u.lam, "periodic": list(g.periodic),
        "dims": list(g.dims), "origin": list(g.origin), "spacing": g.spacing,
    })


def load_config2d(directory, prefix):
    meta = read_json(os.path.join(directory, prefix + ".json"))
    phi = read_snapshot(os.path.join(directory, prefix + ".phi.ahvx"))[0]
    a = np.array([read_snapshot(os.path.join(directory, prefix + ".a%d.ahvx" % i))[0]
                  for i in range(2)])
    g = Grid(tuple(meta["dims"]), meta["spacing"], tuple(meta["origin"]),
             tuple(meta["periodic"]))
    return LatticeConfig2D(g, phi, a, meta["epsilon"], meta["lambda"])
