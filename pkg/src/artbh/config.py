"""TOML run configuration shared by every command.

A configuration is a two-level table.  Every section and key has a default;
unknown names are rejected, so a typo never silently falls back to a default.
``resolve`` returns the fully populated configuration, which is what each run
writes next to its outputs and what ``dumps``/``loads`` round-trip unchanged.
"""
from __future__ import annotations

import copy
import math
import sys
from typing import Any, Optional

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .metrics import (FlatMetric, FourierSeries, SpacetimeMetric, acoustic_metric, as_fourier, draining_bathtub,
                      gordon_metric, kerr_cylindrical, kerr_kerr_schild)

FAMILIES = ("flat", "acoustic", "bathtub", "gordon", "kerr", "kerr_cyl", "perturbation")

# None marks an optional value; it is left out of the serialized file
DEFAULTS: dict[str, dict[str, Any]] = {
    "run": {"seed": 0, "out": "out", "tol": 1e-10, "quiet": False},
    "metric": {"family": "bathtub", "n": 2, "A": 1.0, "B": 0.5, "rho": 1.0, "c": 1.0, "n_refr": 1.5,
               "m": 1.0, "a": 0.0, "delta_B": 0.0, "eps": 0.0},
    "ergosphere": {"h": 0.01, "bbox": None},
    "horizon": {"inner_scale": 0.8, "section_angle": 0.0, "n_samples": 9, "h_curve": 0.005,
                "char_tol": 1e-8},
    "trapped": {"radius": None, "inner_scale": 0.8},
    "rays": {"n_rays": 16, "s_end": 2.0, "radius": 2.0, "H_tol": 1e-8},
    "stability": {"eps": [0.0, 0.05, 0.1, 0.2], "delta_B": 1.0, "scan_offset": 0.1},
    "wavesim": {"h": 1 / 128, "T": 5.0, "sigma": 0.025, "pulse_center": None, "cadence": 0.02, "ko": 1.0,
                "band": 0.02, "dtype": "float32", "kind": "auto", "snapshots": False, "run": True},
}

TOLERANCES = (("run", "tol"), ("ergosphere", "h"), ("horizon", "h_curve"), ("horizon", "char_tol"),
              ("rays", "H_tol"), ("wavesim", "h"), ("wavesim", "T"), ("wavesim", "sigma"), ("wavesim", "cadence"))


def _check_type(sec: str, key: str, val, default):
    where = f"[{sec}].{key}"
    if key in ("B", "delta_B"):
        if isinstance(val, dict):
            try:
                FourierSeries.from_dict(val)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where}: {exc}") from None
            return {k: float(v) for k, v in val.items()}
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            return float(val)
        raise ConfigError(f"{where} must be a number or a table of Fourier coefficients")
    if default is None:
        if key in ("bbox", "pulse_center"):
            n = 4 if key == "bbox" else 2
            if not (isinstance(val, list) and len(val) == n and all(isinstance(v, (int, float)) for v in val)):
                raise ConfigError(f"{where} must be a list of {n} numbers")
            return [float(v) for v in val]
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            return float(val)
        raise ConfigError(f"{where} must be a number")
    if isinstance(default, bool):
        if not isinstance(val, bool):
            raise ConfigError(f"{where} must be true or false")
        return val
    if isinstance(default, int):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{where} must be an integer")
        return val
    if isinstance(default, float):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(val)
    if isinstance(default, str):
        if not isinstance(val, str):
            raise ConfigError(f"{where} must be a string")
        return val
    if isinstance(default, list):
        if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            raise ConfigError(f"{where} must be a list of numbers")
        return [float(v) for v in val]
    return val


def resolve(raw: Optional[dict] = None) -> dict:
    """Defaults merged with ``raw``; raises ConfigError on unknown or ill-typed entries."""
    raw = raw or {}
    out = copy.deepcopy(DEFAULTS)
    for sec, body in raw.items():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for key, val in body.items():
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            out[sec][key] = _check_type(sec, key, val, DEFAULTS[sec][key])
    validate(out)
    return out


def validate(cfg: dict) -> None:
    for sec, key in TOLERANCES:
        v = cfg[sec][key]
        if not (isinstance(v, float) and math.isfinite(v) and v > 0):
            raise ConfigError(f"[{sec}].{key} must be positive, got {v!r}")
    if cfg["metric"]["family"] not in FAMILIES:
        raise ConfigError(f"[metric].family must be one of {', '.join(FAMILIES)}")
    if cfg["wavesim"]["dtype"] not in ("float32", "float64"):
        raise ConfigError("[wavesim].dtype must be float32 or float64")
    if cfg["wavesim"]["kind"] not in ("auto", "BlackHole", "WhiteHole"):
        raise ConfigError("[wavesim].kind must be auto, BlackHole or WhiteHole")
    if cfg["ergosphere"]["bbox"] is not None:
        x0, y0, x1, y1 = cfg["ergosphere"]["bbox"]
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("[ergosphere].bbox must be [xmin, ymin, xmax, ymax] with positive extent")


def _strip_none(cfg: dict) -> dict:
    return {s: {k: v for k, v in body.items() if v is not None} for s, body in cfg.items()}


def loads(text: str) -> dict:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    return resolve(raw)


def load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return loads(text)


def dumps(cfg: dict) -> str:
    return tomli_w.dumps(_strip_none(cfg))


def apply_overrides(cfg: dict, tol: Optional[float] = None, grid: Optional[int] = None,
                    out: Optional[str] = None, quiet: Optional[bool] = None) -> dict:
    """Command-line flags take precedence over the file.

    ``grid`` is the number of wave-simulation cells per unit length (h = 1/grid).
    """
    cfg = copy.deepcopy(cfg)
    if tol is not None:
        cfg["run"]["tol"] = float(tol)
    if grid is not None:
        if int(grid) <= 0:
            raise ConfigError("--grid must be a positive integer")
        cfg["wavesim"]["h"] = 1.0 / int(grid)
    if out is not None:
        cfg["run"]["out"] = str(out)
    if quiet is not None:
        cfg["run"]["quiet"] = bool(quiet)
    validate(cfg)
    return cfg


def _bathtub_velocity(A: float, B: FourierSeries):
    def v(x):
        x = np.asarray(x, float)
        r2 = np.sum(x * x, axis=-1)
        th = np.arctan2(x[..., 1], x[..., 0])
        b = B(th)
        return np.stack([(A * x[..., 0] - b * x[..., 1]) / r2, (A * x[..., 1] + b * x[..., 0]) / r2], -1)
    return v


def build_metric(cfg: dict) -> SpacetimeMetric:
    """Metric described by the [metric] section."""
    m = cfg["metric"]
    fam = m["family"]
    if fam == "flat":
        return FlatMetric(int(m["n"]))
    if fam == "bathtub":
        return draining_bathtub(m["A"], as_fourier(m["B"]))
    if fam == "acoustic":
        L = 2.0 * max(abs(m["A"]), 1.0) + 1.0
        return acoustic_metric(_bathtub_velocity(m["A"], as_fourier(m["B"])), m["rho"], m["c"], 2,
                               bbox=(np.array([-L, -L]), np.array([L, L])))
    if fam == "gordon":
        L = 2.0 * max(abs(m["A"]), 1.0) + 1.0
        return gordon_metric(m["n_refr"], _bathtub_velocity(m["A"], as_fourier(m["B"])), m["c"], 2,
                             bbox=(np.array([-L, -L]), np.array([L, L])))
    if fam == "kerr":
        return kerr_kerr_schild(m["m"], m["a"])
    if fam == "kerr_cyl":
        return kerr_cylindrical(m["m"], m["a"])
    if fam == "perturbation":
        from .stability import bathtub_family
        return bathtub_family(m["A"], as_fourier(m["B"]), as_fourier(m["delta_B"]), max(1.0, m["eps"]))(m["eps"])
    raise ConfigError(f"unknown metric family {fam!r}")
