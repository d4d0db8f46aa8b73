import json
import math

import numpy as np
import pytest

from abelhiggs import acceptance, cli
from abelhiggs.scenario import RingConfig, run_ring
from abelhiggs.snapshot import read_snapshot

SMALL_RING = {"epsilon": 0.1, "guard": 3.0, "truncation_bound": 0.05, "T_run": 0.2,
              "slice_step": 0.1, "t_exterior": 0.1, "t_profile": 0.1,
              "wrong_winding_control": False}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("ring")
    cfg = _write(d / "ring.json", {"ring": SMALL_RING})
    codes = [cli.main([c, "--config", cfg, "--out", str(d / "run"), "--quiet"])
             for c in ("init", "evolve", "analyze")]
    return d, codes


def test_profile_energy(tmp_path, capsys):
    assert cli.main(["profile", "--n", "1", "--lambda", "1", "--out", str(tmp_path)]) == 0
    rows = np.loadtxt(tmp_path / "profile.csv", delimiter=",", skiprows=1)
    assert rows.shape[1] == 3 and rows[0, 1] == 0.0
    man = json.loads((tmp_path / "manifest_profile.json").read_text())
    assert abs(man["results"]["energy"] / math.pi - 1) < 5e-3
    assert "energy" in capsys.readouterr().out


def test_invalid_config_names_every_field(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.json", {"ring": {"epsilon": -0.1, "lam": "x", "bogus": 1}})
    assert cli.main(["init", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    for field in ("ring.lam", "ring.bogus"):
        assert field in err
    cfg = _write(tmp_path / "bad2.json", {"ring": {"epsilon": -0.1, "cfl": 0.9}})
    assert cli.main(["init", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "ring.epsilon" in err and "ring.cfl" in err
    assert cli.main(["profile", "--n", "0", "--out", str(tmp_path)]) == 1
    assert "profile.n" in capsys.readouterr().err
    assert cli.main(["profile", "--config", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path)]) == 1
    assert cli.main(["profile", "--threads", "0", "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_code(tmp_path, capsys):
    # default guard 6 eps does not fit inside rho1 / 3 at eps = 0.1
    cfg = _write(tmp_path / "c.json", {"ring": {"epsilon": 0.1}})
    assert cli.main(["init", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 2
    assert "abelhiggs.initdata" in capsys.readouterr().err


def test_pipeline_matches_in_process_run(pipeline):
    d, codes = pipeline
    assert codes == [0, 0, 0]
    out = d / "run"
    got = json.loads((out / "ring_result.json").read_text())
    want = json.loads(run_ring(RingConfig(**SMALL_RING)).to_json())
    for key in want:
        if key == "timings":
            continue
        assert json.dumps(got[key]) == json.dumps(want[key]), key
    header = (out / "diagnostics.csv").read_text().split("\n")[0].split(",")
    assert header[:4] == ["t", "zeta1", "zeta2", "zeta3"]
    data, h, origin, kind = read_snapshot(out / "init.phi.ahvx")
    assert np.iscomplexobj(data) and h == pytest.approx(0.025)
    for name in ("energy_drift.svg", "ring_radius.svg", "zeta.svg", "summary.json",
                 "manifest_init.json", "manifest_evolve.json", "manifest_analyze.json"):
        assert (out / name).exists(), name


def test_pipeline_deterministic(pipeline, tmp_path):
    d, _ = pipeline
    cfg = str(d / "ring.json")
    for c in ("init", "evolve", "analyze"):
        assert cli.main([c, "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    for name in ("diagnostics.csv", "monitors.csv", "cores.csv", "init.phi.ahvx"):
        assert (tmp_path / name).read_bytes() == (d / "run" / name).read_bytes(), name


def test_evolve_requires_matching_init(pipeline, tmp_path, capsys):
    d, _ = pipeline
    cfg = _write(tmp_path / "c.json", {"ring": dict(SMALL_RING, T_run=0.1, slice_step=0.05,
                                                    t_exterior=0.05, t_profile=0.05),
                                       "input": str(d / "run")})
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "differs" in capsys.readouterr().err
    cfg = _write(tmp_path / "c2.json", {"ring": SMALL_RING, "input": str(tmp_path / "nothing")})
    assert cli.main(["analyze", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_surface_report(tmp_path):
    cfg = _write(tmp_path / "s.json", {"surface": {"circle": 1.0, "T": 0.6, "samples": 32}})
    assert cli.main(["surface", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    res = json.loads((tmp_path / "manifest_surface.json").read_text())["results"]
    assert res["conformal_residual"] < 1e-8 and res["mean_curvature_residual"] < 1e-8
    assert res["L"] == pytest.approx(2 * math.pi)
    g00, h, origin, kind = read_snapshot(tmp_path / "metric_g00.ahvx")
    # on the sheet g_00 = gamma_00 = -cos^2(y0)
    y0 = origin[0] + h * np.arange(g00.shape[0])
    assert np.allclose(g00[:, 0], -np.cos(y0) ** 2, atol=1e-8)


def test_minimize2d_table(tmp_path):
    cfg = _write(tmp_path / "m.json", {"minimize2d": {"lambda": [1.0], "n_max": 1, "h": 0.25,
                                                      "tol": 1e-5}})
    assert cli.main(["minimize2d", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    lines = (tmp_path / "energy_table.csv").read_text().strip().split("\n")
    assert lines[0] == "n,lambda,energy,error,energy_over_pi_n"
    assert abs(float(lines[1].split(",")[4]) - 1) < 0.05


def test_report_exit_codes(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "r.json", {"report": {"criteria": [3]}})
    assert cli.main(["report", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] == [3] and rep["criteria"][0]["name"]

    def failing(n, rings=None):
        return acceptance.CriterionResult(n, "forced", False, {}, "")

    monkeypatch.setattr(acceptance, "criterion", failing)
    assert cli.main(["report", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 3
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["failed"] == [3]
