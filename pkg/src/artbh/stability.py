"""Persistence of event horizons under perturbations of the metric.

Horizons produced by the limit-cycle mechanism survive small perturbations,
while horizons that coincide with the ergosphere (Schwarzschild type) can be
destroyed by a perturbation whose tangential part changes sign.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .curves import ClosedCurve, outward_normals_from_tangents
from .ergosphere import find_ergosphere
from .errors import ArtBHError, ConstructionFailed, NoSignChange, NoZeroSet
from .horizon import (CHAR_TOL, HorizonReport, classify_horizon, find_limit_cycle, is_characteristic_curve,
                      normalized_form)
from .metrics import (BathtubMetric, FourierSeries, KerrCylindricalMetric, KerrMeridionalMetric, PerturbationFamily,
                      PerturbedFlowMetric, SpacetimeMetric, draining_bathtub)
from .parallel import pmap


def default_bbox(metric: SpacetimeMetric):
    """A box comfortably containing the ergosphere of the built-in families."""
    base = metric.base if isinstance(metric, PerturbedFlowMetric) else metric
    if isinstance(base, BathtubMetric):
        Bmax = abs(base.B.b0) + float(np.sum(np.abs(base.B.bc)) + np.sum(np.abs(base.B.bs)))
        R = np.hypot(base.A, Bmax)
        if isinstance(metric, PerturbedFlowMetric):
            R = R + metric.eps * 2.0
        L = 1.5 * R + 0.1
        return (np.array([-L, -L]), np.array([L, L]))
    if isinstance(base, (KerrCylindricalMetric, KerrMeridionalMetric)):
        L = 2.5 * base.m
        return (np.array([-L, -L]), np.array([L, L]))
    if metric.bbox is not None:
        return metric.bbox
    raise ValueError(f"no default bounding box for {metric.name}; pass bbox explicitly")


def outer_ergosphere(metric: SpacetimeMetric, bbox=None, h: float = 0.01) -> ClosedCurve:
    """Outermost closed component of the (restricted) ergosphere."""
    bbox = default_bbox(metric) if bbox is None else bbox
    res = find_ergosphere(metric, bbox, h)
    if not res.curves:
        raise NoZeroSet("ergosphere has no closed component inside the box")
    return max(res.curves, key=lambda c: c.area())


def scaled_curve(c: ClosedCurve, s: float, center=None, label="inner") -> ClosedCurve:
    """Homothetic copy of ``c`` about ``center`` (default: its centroid)."""
    ctr = c.centroid() if center is None else np.asarray(center, float)
    return ClosedCurve(ctr + s * (c.vertices - ctr), c.normals.copy(), s * c.h_curve, label)


@dataclass(frozen=True)
class SchwarzschildTest:
    is_schwarzschild_type: bool
    residual: float
    ergosphere: ClosedCurve


def schwarzschild_type_test(metric: SpacetimeMetric, bbox=None, h: float = 0.01,
                            tol: float = CHAR_TOL) -> SchwarzschildTest:
    """True when the (restricted) ergosphere is itself a characteristic curve."""
    ergo = outer_ergosphere(metric, bbox, h)
    m2 = metric.meridional() if isinstance(metric, KerrCylindricalMetric) else metric
    res = is_characteristic_curve(m2, ergo)
    return SchwarzschildTest(res.max <= tol, res.max, ergo)


def polar_offset_curves(ergo: ClosedCurve, offsets: Sequence[float], n: int = 1440, center=None):
    """Curves ``r_e(theta) + delta`` around ``center`` with spectrally accurate normals."""
    ctr = ergo.centroid() if center is None else np.asarray(center, float)
    d = ergo.vertices - ctr
    ang = np.arctan2(d[:, 1], d[:, 0])
    rad = np.hypot(d[:, 0], d[:, 1])
    o = np.argsort(ang)
    ang, rad = ang[o], rad[o]
    th = -np.pi + 2 * np.pi * np.arange(n) / n
    re = np.interp(th, ang, rad, period=2 * np.pi)
    k = np.fft.fftfreq(n, d=1.0 / n)
    out = []
    for delta in offsets:
        r = re + delta
        dr = np.real(np.fft.ifft(1j * k * np.fft.fft(r)))
        P = ctr + np.stack([r * np.cos(th), r * np.sin(th)], 1)
        T = np.stack([dr * np.cos(th) - r * np.sin(th), dr * np.sin(th) + r * np.cos(th)], 1)
        out.append(ClosedCurve(P, outward_normals_from_tangents(T), float(np.max(r)) * 2 * np.pi / n,
                               f"offset{delta:+.4f}"))
    return out


def residual_scan(metric: SpacetimeMetric, ergo: ClosedCurve, max_offset: float = 0.1, n_offsets: int = 201,
                  center=None):
    """Smallest characteristic residual among radial offsets of the ergosphere.

    Returns ``(floor, best_offset)``; a curve is characteristic only if its
    worst vertex is, so each offset curve is scored by its maximum residual.
    """
    offs = np.linspace(-max_offset, max_offset, n_offsets)
    best = (np.inf, np.nan)
    for c in polar_offset_curves(ergo, offs, center=center):
        inside = metric.inside(c.vertices)
        if not inside.all():
            continue
        r = float(normalized_form(metric, c.vertices, c.normals).max())
        if r < best[0]:
            best = (r, float(c.label[6:]))
    return best


@dataclass
class EpsOutcome:
    eps: float
    horizon: bool
    reason: str = ""
    kind: str = ""
    radius_mean: float = np.nan
    radius_min: float = np.nan
    radius_max: float = np.nan
    ergo_radius_mean: float = np.nan
    ergosphere_gap: float = np.nan
    residual: float = np.nan
    residual_floor: float = np.nan
    schwarzschild_type: bool = False
    curve: Optional[ClosedCurve] = None

    def row(self) -> dict:
        return {"eps": self.eps, "outcome": "Horizon" if self.horizon else "NoHorizon",
                "horizon_radius_mean": self.radius_mean, "ergosphere_gap": self.ergosphere_gap,
                "residual": self.residual if self.horizon else self.residual_floor}


@dataclass
class StabilityScanResult:
    eps: List[float]
    outcomes: List[EpsOutcome]
    verdict: str  # StablePersistence | UnstableLoss | PreservedByConstruction | NoBaseHorizon

    def to_dict(self) -> dict:
        outs = []
        for o in self.outcomes:
            d = {k: v for k, v in o.__dict__.items() if k != "curve"}
            outs.append(d)
        return {"eps": list(self.eps), "verdict": self.verdict, "outcomes": outs}


def _polar_stats(curve: ClosedCurve, center):
    d = curve.vertices - center
    r = np.hypot(d[:, 0], d[:, 1])
    return r, np.arctan2(d[:, 1], d[:, 0])


def curve_gap(ergo: ClosedCurve, horizon: ClosedCurve, center=(0.0, 0.0)) -> float:
    """Mean radial distance from the horizon to the ergosphere along rays from ``center``."""
    c = np.asarray(center, float)
    re, ae = _polar_stats(ergo, c)
    rh, ah = _polar_stats(horizon, c)
    o = np.argsort(ae)
    return float(np.mean(np.interp(ah, ae[o], re[o], period=2 * np.pi) - rh))


def analyse_member(metric: SpacetimeMetric, eps: float = 0.0, bbox=None, h: float = 0.01,
                   inner_scale: float = 0.8, center=(0.0, 0.0), scan_offset: float = 0.1,
                   finder_kw: Optional[dict] = None) -> EpsOutcome:
    """Run the horizon pipeline for one member of a family; errors become ``NoHorizon``."""
    finder_kw = finder_kw or {}
    c = np.asarray(center, float)
    try:
        st = schwarzschild_type_test(metric, bbox, h)
    except ArtBHError as exc:
        return EpsOutcome(eps, False, f"{type(exc).__name__}: {exc}")
    ergo = st.ergosphere
    re, _ = _polar_stats(ergo, c)
    if st.is_schwarzschild_type:
        try:
            kind, res, _ = classify_horizon(metric, ergo)
        except ArtBHError as exc:
            return EpsOutcome(eps, False, f"{type(exc).__name__}: {exc}", schwarzschild_type=True)
        return EpsOutcome(eps, True, "schwarzschild-type", kind, float(re.mean()), float(re.min()), float(re.max()),
                          float(re.mean()), 0.0, res.max, res.max, True, ergo)
    inner = scaled_curve(ergo, inner_scale, c)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            rep = find_limit_cycle(metric, ergo, inner, **finder_kw)
        except ArtBHError as exc:
            floor, _ = residual_scan(metric, ergo, scan_offset, center=c)
            return EpsOutcome(eps, False, f"{type(exc).__name__}: {exc}", ergo_radius_mean=float(re.mean()),
                              residual_floor=floor)
    rh, _ = _polar_stats(rep.curve, c)
    return EpsOutcome(eps, True, "limit-cycle", rep.kind, float(rh.mean()), float(rh.min()), float(rh.max()),
                      float(re.mean()), curve_gap(ergo, rep.curve, c), rep.char_residual, rep.char_residual, False,
                      rep.curve)


def _verdict(outcomes: List[EpsOutcome]) -> str:
    base = [o for o in outcomes if o.eps == 0.0]
    if base and not base[0].horizon:
        return "NoBaseHorizon"
    if all(o.horizon for o in outcomes):
        return "StablePersistence"
    return "UnstableLoss"


def horizon_persistence_scan(family: PerturbationFamily, eps_list: Sequence[float], bbox=None, h: float = 0.01,
                             inner_scale: float = 0.8, center=(0.0, 0.0), finder_kw: Optional[dict] = None
                             ) -> StabilityScanResult:
    """Horizon pipeline over ``eps_list``; per-member failures are recorded, never raised."""
    eps_list = [float(e) for e in eps_list]
    if 0.0 not in eps_list:
        raise ValueError("the scan must include eps = 0")
    outs = pmap(lambda e: analyse_member(family(e), e, bbox, h, inner_scale, center, finder_kw=finder_kw), eps_list)
    return StabilityScanResult(eps_list, outs, _verdict(outs))


def preserved_family_demo(radius: Callable[[float], float], eps_list: Sequence[float],
                          extra_B: Optional[Callable[[float], object]] = None, h: float = 0.01,
                          tol: float = 1e-10) -> StabilityScanResult:
    """Bathtub family ``A = radius(eps)``, ``B = 0`` whose horizon ``r = A`` is kept by construction.

    ``extra_B(eps)`` may add a swirl profile to individual members, which
    breaks the construction when it makes the ergosphere non-characteristic.
    """
    from .horizon import circle

    outs = []
    for e in eps_list:
        A = float(radius(e))
        B = extra_B(e) if extra_B is not None else 0.0
        m = draining_bathtub(A, B)
        st = schwarzschild_type_test(m, h=h)
        res = is_characteristic_curve(m, circle(A)).max
        if not st.is_schwarzschild_type or res > tol:
            raise ConstructionFailed(f"member eps={e}: ergosphere residual {st.residual:.2e}, circle residual {res:.2e}")
        r = np.linalg.norm(st.ergosphere.vertices, axis=1)
        outs.append(EpsOutcome(float(e), True, "schwarzschild-type", classify_horizon(m, st.ergosphere)[0],
                               float(r.mean()), float(r.min()), float(r.max()), float(r.mean()), 0.0, res, res,
                               True, st.ergosphere))
    return StabilityScanResult([float(e) for e in eps_list], outs, "PreservedByConstruction")


# ready-made families ---------------------------------------------------------

def bathtub_family(A: float, B, delta_B, eps_max: float = 1.0) -> PerturbationFamily:
    """Bathtub base with the tangential perturbation ``delta_B(theta) theta_hat / r``."""
    from .metrics import perturbation_family, tangential_delta

    base = draining_bathtub(A, B)
    dv, dj = tangential_delta(delta_B)
    return perturbation_family(base, dv, eps_max, dj)
