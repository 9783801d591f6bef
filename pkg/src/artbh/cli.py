"""Command-line front end.

Every command reads the shared TOML configuration, writes its outputs and the
fully resolved configuration into ``--out``, and prints a one-line JSON
summary.  Exit codes: 0 success (including an expected absence of a horizon),
2 failed precondition or invalid configuration, 1 internal error, 64 usage
error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as cfgmod
from .errors import ArtBHError, NoZeroSet, PreconditionError, PreconditionFailed
from .io import SvgPlot, curves_svg, to_json, write_csv, write_json

EXIT_OK, EXIT_INTERNAL, EXIT_PRECONDITION, EXIT_USAGE = 0, 1, 2, 64
COMMANDS = ("ergosphere", "horizon", "trapped", "rays", "kerr-verify", "stability", "wavesim", "pipeline")
KIND_NAMES = {"WhiteHole": "white_hole", "BlackHole": "black_hole"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artbh", description="Ergospheres, event horizons and wave tests for moving media.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML configuration file")
        s.add_argument("--out", help="output directory (default from config, 'out')")
        s.add_argument("--tol", type=float, help="integration tolerance")
        s.add_argument("--grid", type=int, help="wave-simulation cells per unit length")
        s.add_argument("--quiet", action="store_true", help="suppress warnings on stderr")
        if name == "kerr-verify":
            s.add_argument("--m", type=float, default=None)
            s.add_argument("--a", type=float, default=None)
    return p


# ---------------------------------------------------------------------------
# shared stages
# ---------------------------------------------------------------------------

def _planar(metric, cfg):
    """The metric used for planar geometry (meridional block for Kerr)."""
    from .metrics import KerrSchildMetric, kerr_cylindrical
    if isinstance(metric, KerrSchildMetric):
        return kerr_cylindrical(metric.m, metric.a)
    return metric


def _bbox(metric, cfg):
    from .stability import default_bbox
    b = cfg["ergosphere"]["bbox"]
    if b is not None:
        return (np.array(b[:2]), np.array(b[2:]))
    try:
        return default_bbox(metric)
    except ValueError:
        return (np.array([-3.0, -3.0]), np.array([3.0, 3.0]))


def _radius_stats(curve, center=(0.0, 0.0)):
    r = np.linalg.norm(curve.vertices - np.asarray(center), axis=1)
    return {"radius_mean": float(r.mean()), "radius_min": float(r.min()), "radius_max": float(r.max())}


def stage_ergosphere(metric, cfg):
    from .stability import outer_ergosphere
    metric = _planar(metric, cfg)
    if metric.n not in (2, 3):
        raise PreconditionFailed("ergosphere extraction needs a planar or axisymmetric metric")
    try:
        return outer_ergosphere(metric, _bbox(metric, cfg), cfg["ergosphere"]["h"])
    except NoZeroSet:
        raise PreconditionFailed("no ergosphere found") from None


def detect_horizon(metric, cfg, report: Optional[dict] = None):
    """Ergosphere, Schwarzschild-type test and (when it applies) the limit-cycle finder.

    Returns ``(ergosphere, horizon curve or None, info dict)``.  A finder that
    does not locate a cycle is an expected outcome and yields ``None``.
    """
    from .horizon import classify_horizon, find_limit_cycle, is_characteristic_curve
    from .metrics import KerrCylindricalMetric
    from .stability import scaled_curve

    hc = cfg["horizon"]
    pm = _planar(metric, cfg)
    geo = pm.meridional() if isinstance(pm, KerrCylindricalMetric) else pm
    info = report if report is not None else {}
    ergo = stage_ergosphere(metric, cfg)
    info["ergosphere"] = _radius_stats(ergo) | {"n_vertices": len(ergo)}
    res = is_characteristic_curve(geo, ergo)
    info["ergosphere_residual"] = res.max
    if res.max <= hc["char_tol"]:
        # Schwarzschild type: the ergosphere is the horizon; verify it directly
        info["schwarzschild_type"] = True
        try:
            kind, _, _ = classify_horizon(geo, ergo, hc["char_tol"])
        except ArtBHError as exc:
            info.update(horizon_found=False, reason=f"{type(exc).__name__}: {exc}")
            return ergo, None, info
        info.update(horizon_found=True, kind=KIND_NAMES[kind], char_residual=res.max, **_radius_stats(ergo))
        return ergo, ergo, info
    info["schwarzschild_type"] = False
    inner = scaled_curve(ergo, hc["inner_scale"], np.zeros(2))
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = find_limit_cycle(geo, ergo, inner, section_angle=hc["section_angle"], n_samples=hc["n_samples"],
                                   tol=min(cfg["run"]["tol"], 1e-10), h_curve=hc["h_curve"],
                                   char_tol=hc["char_tol"])
        info["warnings"] = [str(w.message) for w in caught]
    except PreconditionError:
        raise
    except ArtBHError as exc:
        info.update(horizon_found=False, reason=f"{type(exc).__name__}: {exc}")
        return ergo, None, info
    info.update(horizon_found=True, kind=KIND_NAMES[rep.kind], char_residual=rep.char_residual,
                return_map_slope=rep.return_map_slope, **_radius_stats(rep.curve))
    return ergo, rep.curve, info


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ergosphere(cfg, out: Path, args) -> dict:
    metric = cfgmod.build_metric(cfg)
    ergo = stage_ergosphere(metric, cfg)
    write_csv(out / "ergosphere.csv", ["x", "y", "nx", "ny"], np.column_stack([ergo.vertices, ergo.normals]))
    curves_svg(out / "ergosphere.svg", [ergo], ["ergosphere"], "ergosphere")
    return {"n_vertices": len(ergo), "area": ergo.area(), **_radius_stats(ergo)}


def cmd_horizon(cfg, out: Path, args) -> dict:
    metric = cfgmod.build_metric(cfg)
    ergo, hor, info = detect_horizon(metric, cfg)
    curves, labels = [ergo], ["ergosphere"]
    if hor is not None:
        write_csv(out / "horizon.csv", ["x", "y", "nx", "ny"], np.column_stack([hor.vertices, hor.normals]))
        if hor is not ergo:
            curves.append(hor)
            labels.append("horizon")
    curves_svg(out / "horizon.svg", curves, labels, "horizon")
    write_json(out / "horizon.json", info)
    return info


def cmd_trapped(cfg, out: Path, args) -> dict:
    from .bicharacteristics import trapped_condition_check
    from .horizon import circle
    from .stability import scaled_curve
    metric = _planar(cfgmod.build_metric(cfg), cfg)
    if metric.n != 2:
        metric = metric.meridional()
    tc = cfg["trapped"]
    if tc["radius"] is not None:
        curve = circle(tc["radius"])
    else:
        curve = scaled_curve(stage_ergosphere(metric, cfg), tc["inner_scale"], np.zeros(2))
    status = trapped_condition_check(metric, curve)
    return {"status": status, "trapped": status == "AllInward", **_radius_stats(curve)}


def cmd_rays(cfg, out: Path, args) -> dict:
    from .bicharacteristics import null_seed_suite, sample_seeds
    metric = cfgmod.build_metric(cfg)
    rc = cfg["rays"]
    X, D = sample_seeds(metric, rc["n_rays"], cfg["run"]["seed"], rc["radius"])
    res = null_seed_suite(metric, X, D, rc["s_end"], cfg["run"]["tol"], rc["H_tol"])
    rows = [[k, *r.x.tolist(), *r.direction.tolist(), r.h_drift, r.xi0_drift, r.s_end, r.stop_reason]
            for k, r in enumerate(res)]
    n = metric.n
    write_csv(out / "rays.csv", ["seed", *[f"x{i + 1}" for i in range(n)], *[f"d{i + 1}" for i in range(n)],
                                 "h_drift", "xi0_drift", "s_end", "stop_reason"], rows)
    hd = [r.h_drift for r in res if np.isfinite(r.h_drift)]
    xd = [r.xi0_drift for r in res if np.isfinite(r.xi0_drift)]
    stops = {}
    for r in res:
        stops[r.stop_reason] = stops.get(r.stop_reason, 0) + 1
    return {"n_rays": len(res), "max_h_drift": max(hd) if hd else None, "max_xi0_drift": max(xd) if xd else None,
            "stop_reasons": dict(sorted(stops.items()))}


def cmd_kerr_verify(cfg, out: Path, args) -> dict:
    from .ergosphere import verify_kerr
    m = cfg["metric"]["m"] if args.m is None else args.m
    a = cfg["metric"]["a"] if args.a is None else args.a
    if not (m > 0 and 0 <= abs(a) < m):
        raise PreconditionFailed("kerr-verify needs m > 0 and |a| < m")
    v = verify_kerr(m, abs(a), h=cfg["ergosphere"]["h"])
    d = v.to_dict()
    d["max_abs_delta1"] = max(v.max_delta1.values())
    d["max_contour_error"] = max(v.contour_error.values())
    write_json(out / "kerr_verify.json", d)
    return d


def _family_from_cfg(cfg):
    from .metrics import BathtubMetric, as_fourier
    from .stability import bathtub_family
    metric = cfgmod.build_metric(cfg)
    if not isinstance(metric, BathtubMetric):
        raise PreconditionFailed("stability scans are defined for bathtub metrics")
    eps = cfg["stability"]["eps"]
    return bathtub_family(metric.A, metric.B, as_fourier(cfg["stability"]["delta_B"]), max(eps + [1e-300]))


def cmd_stability(cfg, out: Path, args) -> dict:
    from .stability import horizon_persistence_scan
    fam = _family_from_cfg(cfg)
    eps = cfg["stability"]["eps"]
    if any(e < 0 for e in eps):
        raise PreconditionFailed("eps values must be nonnegative")
    res = horizon_persistence_scan(fam, eps, h=cfg["ergosphere"]["h"])
    rows = [[o.eps, ("horizon" if o.horizon else "no_horizon"), o.radius_mean, o.ergosphere_gap,
             o.residual if o.horizon else o.residual_floor] for o in res.outcomes]
    write_csv(out / "stability.csv", ["eps", "outcome", "horizon_radius_mean", "ergosphere_gap", "residual"], rows)
    write_json(out / "stability.json", res.to_dict())
    curves = [o.curve for o in res.outcomes if o.curve is not None]
    if curves:
        curves_svg(out / "stability.svg", curves, [f"eps={o.eps:g}" for o in res.outcomes if o.curve is not None],
                   "horizons across eps")
    return {"verdict": res.verdict, "n_eps": len(eps),
            "horizons": [bool(o.horizon) for o in res.outcomes]}


def _containment(metric, horizon, kind, cfg, out: Path) -> dict:
    from .wavesim import containment_experiment, write_snapshot
    wc = cfg["wavesim"]
    last = {}

    def snap(state):
        last["t"], last["u"] = state.t, state.u_curr.astype(np.float64)

    res = containment_experiment(metric, horizon, kind, T=wc["T"], h=wc["h"], sigma=wc["sigma"],
                                 pulse_center=wc["pulse_center"], cadence=wc["cadence"], ko=wc["ko"],
                                 band=wc["band"], dtype=wc["dtype"], snapshot=snap if wc["snapshots"] else None)
    res.report.to_csv(out / "energy.csv")
    if wc["snapshots"]:
        write_snapshot(out / "final_u.bin", res.grid, last["u"], last["t"])
    return res.summary()


def cmd_wavesim(cfg, out: Path, args) -> dict:
    from .horizon import circle
    metric = cfgmod.build_metric(cfg)
    if metric.n != 2:
        raise PreconditionFailed("the wave simulator is planar")
    wc = cfg["wavesim"]
    if cfg["metric"]["family"] == "flat":
        # control run: same geometry as the unit-radius bathtub horizon, no horizon present
        hor, kind = circle(1.0, 2048), ("BlackHole" if wc["kind"] == "auto" else wc["kind"])
        info = {"control": True}
    else:
        _, hor, info = detect_horizon(metric, cfg)
        if hor is None:
            raise PreconditionFailed("no horizon to test containment against")
        kind = {"white_hole": "WhiteHole", "black_hole": "BlackHole"}[info["kind"]] if wc["kind"] == "auto" \
            else wc["kind"]
        info = {"control": False, "kind": info["kind"]}
    info.update(_containment(metric, hor, kind, cfg, out))
    write_json(out / "wavesim.json", info)
    return info


def cmd_pipeline(cfg, out: Path, args) -> dict:
    from .bicharacteristics import trapped_condition_check
    from .horizon import ergosphere_noncharacteristic_check, is_characteristic_curve
    from .metrics import KerrCylindricalMetric
    from .stability import scaled_curve

    metric = cfgmod.build_metric(cfg)
    pm = _planar(metric, cfg)
    geo = pm.meridional() if isinstance(pm, KerrCylindricalMetric) else pm
    rep = {"stages": {}, "horizon_found": False, "failed_stage": None}
    stages = rep["stages"]
    stage = "ergosphere"
    try:
        ergo = stage_ergosphere(metric, cfg)
        stages["ergosphere"] = {"ok": True, **_radius_stats(ergo)}
        stage = "noncharacteristic_check"
        chk = ergosphere_noncharacteristic_check(geo, ergo, cfg["horizon"]["char_tol"])
        stages[stage] = {"ok": True, "status": chk.status, "min_residual": chk.min_form,
                         "schwarzschild_type": chk.everywhere}
        curves, labels = [ergo], ["ergosphere"]
        if chk.everywhere:
            # route to a direct verification of the ergosphere as a characteristic curve
            stage = "characteristic_verification"
            res = is_characteristic_curve(geo, ergo)
            stages[stage] = {"ok": res.max <= cfg["horizon"]["char_tol"], "residual": res.max}
            hor = ergo
            _, _, info = detect_horizon(metric, cfg)
        else:
            stage = "trapped_check"
            inner = scaled_curve(ergo, cfg["horizon"]["inner_scale"], np.zeros(2))
            status = trapped_condition_check(geo, inner)
            stages[stage] = {"ok": status != "Mixed", "status": status}
            if status == "Mixed":
                raise PreconditionFailed("forward cones on the inner curve are mixed")
            stage = "finder"
            _, hor, info = detect_horizon(metric, cfg)
            stages[stage] = {"ok": True, "horizon_found": info["horizon_found"],
                             **({"reason": info["reason"]} if "reason" in info else {})}
        rep["horizon_found"] = info["horizon_found"]
        if hor is not None and info["horizon_found"]:
            stage = "classification"
            stages[stage] = {"ok": True, "kind": info["kind"], "char_residual": info["char_residual"],
                             **_radius_stats(hor)}
            rep["kind"] = info["kind"]
            if hor is not ergo:
                curves.append(hor)
                labels.append("horizon")
            if cfg["wavesim"]["run"] and geo.n == 2 and not isinstance(pm, KerrCylindricalMetric):
                stage = "containment"
                kind = {"white_hole": "WhiteHole", "black_hole": "BlackHole"}[info["kind"]]
                stages[stage] = {"ok": True, **_containment(geo, hor, kind, cfg, out)}
        curves_svg(out / "pipeline.svg", curves, labels, "pipeline")
    except PreconditionError as exc:
        stages[stage] = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        rep["failed_stage"] = stage
        write_json(out / "pipeline.json", rep)
        raise
    write_json(out / "pipeline.json", rep)
    return {"horizon_found": rep["horizon_found"], "kind": rep.get("kind"), "failed_stage": None,
            "stages": sorted(stages)}


HANDLERS = {"ergosphere": cmd_ergosphere, "horizon": cmd_horizon, "trapped": cmd_trapped, "rays": cmd_rays,
            "kerr-verify": cmd_kerr_verify, "stability": cmd_stability, "wavesim": cmd_wavesim,
            "pipeline": cmd_pipeline}


def _emit(summary: dict, stream=None):
    stream = stream or sys.stdout
    stream.write(to_json(summary, indent=None) + "\n")
    stream.flush()


def run(argv=None) -> int:
    """Run one command; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    summary = {"command": args.command, "ok": False}
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.resolve({})
        cfg = cfgmod.apply_overrides(cfg, args.tol, args.grid, args.out, args.quiet or None)
        out = Path(cfg["run"]["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(cfgmod.dumps(cfg))
        with warnings.catch_warnings():
            if cfg["run"]["quiet"]:
                warnings.simplefilter("ignore")
            summary.update(HANDLERS[args.command](cfg, out, args))
        summary["ok"] = True
        _emit(summary)
        return EXIT_OK
    except PreconditionError as exc:
        summary["error"] = f"{type(exc).__name__}: {exc}"
        _emit(summary)
        return EXIT_PRECONDITION
    except Exception as exc:  # noqa: BLE001 - anything else is a tool failure
        summary["error"] = f"{type(exc).__name__}: {exc}"
        _emit(summary)
        return EXIT_INTERNAL


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
