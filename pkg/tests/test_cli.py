import json
import os

import pytest

from artbh import cli


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(capsys, argv):
    code = cli.run(argv)
    lines = capsys.readouterr().out.strip().splitlines()
    return code, (json.loads(lines[-1]) if lines else None)


def test_horizon_white_hole(tmp_path, capsys):
    cfg = _write(tmp_path, "b.toml", "[metric]\nfamily = 'bathtub'\nA = 1.0\nB = 0.5\n")
    code, s = _run(capsys, ["horizon", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 0 and s["ok"]
    assert s["kind"] == "white_hole" and abs(s["radius_mean"] - 1.0) < 1e-6
    for f in ("config.toml", "horizon.json", "horizon.csv", "horizon.svg"):
        assert (tmp_path / "o" / f).exists()
    written = (tmp_path / "o" / "config.toml").read_text()
    assert "[wavesim]" in written and "tol" in written  # defaults included


def test_kerr_verify(tmp_path, capsys):
    code, s = _run(capsys, ["kerr-verify", "--m", "1", "--a", "0.6", "--out", str(tmp_path)])
    assert code == 0
    assert s["max_abs_delta1"] < 1e-10 and s["r_plus"] == pytest.approx(1.8) and s["r_minus"] == pytest.approx(0.2)


def test_flat_metric_has_no_ergosphere(tmp_path, capsys):
    cfg = _write(tmp_path, "f.toml", "[metric]\nfamily = 'flat'\n")
    code, s = _run(capsys, ["horizon", "--config", cfg, "--out", str(tmp_path)])
    assert code == 2 and "no ergosphere found" in s["error"]


@pytest.mark.parametrize("argv", [["horizon", "--bogus"], [], ["teleport"], ["wavesim", "--grid", "fine"]])
def test_usage_errors(argv, capsys):
    assert cli.run(argv) == 64


def test_config_errors_exit_2(tmp_path, capsys):
    code, s = _run(capsys, ["horizon", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)])
    assert code == 2
    bad = _write(tmp_path, "bad.toml", "[metric]\nspin = 3\n")
    assert _run(capsys, ["horizon", "--config", bad, "--out", str(tmp_path)])[0] == 2
    assert _run(capsys, ["horizon", "--tol", "-1", "--out", str(tmp_path)])[0] == 2


def test_trapped_and_rays(tmp_path, capsys):
    cfg = _write(tmp_path, "b.toml", "[metric]\nA = -1.0\nB = 0.5\n[rays]\nn_rays = 6\n")
    code, s = _run(capsys, ["trapped", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0 and s["status"] == "AllInward" and s["trapped"]
    code, s = _run(capsys, ["rays", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0 and s["n_rays"] == 6 and s["max_h_drift"] <= 1e-8
    assert (tmp_path / "rays.csv").read_text().startswith("seed,x1,x2,d1,d2,h_drift")


def test_stability_unstable_scan(tmp_path, capsys):
    cfg = _write(tmp_path, "s.toml", "[metric]\nA = 1.0\nB = 0.0\n[stability]\neps = [0.0, 0.05]\n"
                 "[stability.delta_B]\nb1 = 1.0\n")
    code, s = _run(capsys, ["stability", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0 and s["verdict"] == "UnstableLoss" and s["horizons"] == [True, False]
    head = (tmp_path / "stability.csv").read_text().splitlines()[0]
    assert head == "eps,outcome,horizon_radius_mean,ergosphere_gap,residual"


def test_pipeline_routes(tmp_path, capsys):
    cos = _write(tmp_path, "c.toml", "[metric]\nA = 1.0\n[metric.B]\nb1 = 0.5\n")
    code, s = _run(capsys, ["pipeline", "--config", cos, "--out", str(tmp_path / "c")])
    assert code == 0 and s["horizon_found"] is False
    kerr = _write(tmp_path, "k.toml", "[metric]\nfamily = 'kerr_cyl'\na = 0.6\n")
    code, s = _run(capsys, ["pipeline", "--config", kerr, "--out", str(tmp_path / "k")])
    assert code == 0 and s["horizon_found"] and s["kind"] == "black_hole"
    rep = json.loads((tmp_path / "k" / "pipeline.json").read_text())
    assert rep["stages"]["noncharacteristic_check"]["schwarzschild_type"]
    assert rep["stages"]["characteristic_verification"]["ok"]
    assert "finder" not in rep["stages"]


def test_pipeline_with_containment(tmp_path, capsys):
    cfg = _write(tmp_path, "p.toml", "[wavesim]\nT = 2.0\n")
    code, s = _run(capsys, ["pipeline", "--config", cfg, "--out", str(tmp_path), "--grid", "128"])
    assert code == 0 and s["kind"] == "white_hole"
    rep = json.loads((tmp_path / "pipeline.json").read_text())
    assert all(st["ok"] for st in rep["stages"].values())
    assert rep["stages"]["containment"]["leakage"] < 1e-3
    assert (tmp_path / "energy.csv").read_text().startswith("t,E_int,E_ext,sup_u")


def test_outputs_are_byte_identical_across_thread_counts(tmp_path, capsys, monkeypatch):
    cfg = _write(tmp_path, "d.toml", "[run]\nseed = 7\n[rays]\nn_rays = 8\n[wavesim]\nT = 0.5\n"
                 "[stability]\neps = [0.0, 0.1]\n")
    outs = []
    for width in (1, 2, max(4, os.cpu_count() or 1)):
        monkeypatch.setenv("ARTBH_THREADS", str(width))
        d = tmp_path / f"w{width}"
        for cmd in ("pipeline", "rays", "stability"):
            assert cli.run([cmd, "--config", cfg, "--out", str(d), "--grid", "128"]) == 0
        # config.toml differs only in its out path
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".json", ".csv", ".svg")})
    capsys.readouterr()
    assert outs[0].keys() == outs[1].keys() == outs[2].keys()
    assert {"pipeline.json", "energy.csv", "rays.csv", "stability.csv", "stability.json"} <= outs[0].keys()
    assert outs[0] == outs[1] == outs[2]
