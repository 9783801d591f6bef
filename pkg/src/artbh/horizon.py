"""Event horizons of planar stationary metrics as limit cycles.

Inside the ergosphere the spatial block of the metric is indefinite, so at
each point there are two null covectors and, rotated by a quarter turn, two
characteristic directions.  Flowing one of these direction fields around the
annulus between the ergosphere and a trapped inner curve gives a return map
on a transversal section whose fixed point is a closed characteristic curve:
the event horizon.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from .bicharacteristics import J, MERGE_TOL, forward_null_covector, null_pair, trapped_condition_check
from .curves import ClosedCurve, outward_normals_from_tangents, signed_area
from .errors import (BranchFlip, ErgosphereCharacteristic, IndefiniteSign, NoSignChange, NotCharacteristic,
                     OutsideErgosphere, PreconditionFailed, StepUnderflow)
from .metrics import KerrCylindricalMetric, SpacetimeMetric
from .ode import dopri5
from .parallel import pmap

CHAR_TOL = 1e-8
SIGN_FLOOR = 1e-10
PLUS, MINUS = "Plus", "Minus"


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

def normalized_form(metric: SpacetimeMetric, x, nu) -> np.ndarray:
    """``|nu^T G nu| / (||G||_2 |nu|^2)`` with ``G`` the spatial block."""
    x = np.atleast_2d(x)
    nu = np.atleast_2d(nu)
    G = metric.g_up(x)[:, 1:, 1:]
    q = np.einsum("ij,ijk,ik->i", nu, G, nu)
    return np.abs(q) / (np.linalg.norm(G, ord=2, axis=(1, 2)) * np.sum(nu * nu, axis=1))


@dataclass(frozen=True)
class ResidualReport:
    max: float
    mean: float
    values: np.ndarray

    def passes(self, tol: float = CHAR_TOL) -> bool:
        return self.max <= tol


def is_characteristic_curve(metric: SpacetimeMetric, curve: ClosedCurve) -> ResidualReport:
    """Normalised characteristic residual of the curve normals."""
    r = normalized_form(metric, curve.vertices, curve.normals)
    return ResidualReport(float(np.max(r)), float(np.mean(r)), r)


@dataclass(frozen=True)
class ErgoCheck:
    status: str  # NonCharacteristic | CharacteristicSomewhere
    min_form: float
    points: np.ndarray
    fraction: float

    @property
    def everywhere(self) -> bool:
        return self.fraction == 1.0


def ergosphere_noncharacteristic_check(metric: SpacetimeMetric, ergo: ClosedCurve, tol: float = 1e-6) -> ErgoCheck:
    """Where the ergosphere normal is (nearly) a null covector of the spatial block."""
    r = normalized_form(metric, ergo.vertices, ergo.normals)
    bad = r <= tol
    status = "CharacteristicSomewhere" if bad.any() else "NonCharacteristic"
    return ErgoCheck(status, float(r.min()), ergo.vertices[bad], float(bad.mean()))


def classify_horizon(metric: SpacetimeMetric, curve: ClosedCurve, char_tol: float = CHAR_TOL,
                     sign_floor: float = SIGN_FLOOR):
    """``WhiteHole`` if ``g^{0j} nu_j > 0`` on the whole curve, ``BlackHole`` if negative.

    Returns ``(kind, residual_report, sign_values)``.
    """
    res = is_characteristic_curve(metric, curve)
    if not res.passes(char_tol):
        raise NotCharacteristic(f"characteristic residual {res.max:.3e} exceeds {char_tol:.1e}")
    g0 = metric.g_up(curve.vertices)[:, 0, 1:]
    s = np.sum(g0 * curve.normals, axis=1)
    if np.any(np.abs(s) < sign_floor) or not (np.all(s > 0) or np.all(s < 0)):
        raise IndefiniteSign(f"g^(0j) nu_j ranges over [{s.min():.3e}, {s.max():.3e}]")
    return ("WhiteHole" if s[0] > 0 else "BlackHole"), res, s


# ---------------------------------------------------------------------------
# characteristic direction fields
# ---------------------------------------------------------------------------

@dataclass
class CharacteristicField:
    """Unit characteristic direction field ``f = J eta`` of one null family.

    ``eta`` is the forward-oriented null covector of the family, so ``f`` is
    the spatial direction of the forward null bicharacteristic for the plus
    family and the reversed direction for the minus family.  The two fields
    agree on the ergosphere.
    """

    metric: SpacetimeMetric
    family: str
    merge_tol: float = MERGE_TOL
    seed_angle: float = 0.0

    def __post_init__(self):
        if self.family not in (PLUS, MINUS):
            raise ValueError(f"family must be {PLUS!r} or {MINUS!r}, got {self.family!r}")

    def __call__(self, x) -> np.ndarray:
        g = self.metric.g_point(x)
        a, b, c = g[1, 1], g[1, 2], g[2, 2]
        D = a * c - b * b
        sc = max(abs(a), abs(b), abs(c)) ** 2
        if D / sc > self.merge_tol:
            raise OutsideErgosphere(f"Delta={D:.3e} > 0 at {list(map(float, x))}")
        e0, e1 = forward_null_covector(g, -1.0 if self.family == PLUS else 1.0)
        return np.array([-e1, e0])

    def covector(self, x) -> np.ndarray:
        eta, _, _ = null_pair(self.metric.g_point(x))
        return eta[0 if self.family == PLUS else 1]


def characteristic_fields(metric: SpacetimeMetric, ergosphere: Optional[ClosedCurve] = None,
                          check_tol: float = 1e-6):
    """The plus and minus fields; if the ergosphere is given it is checked first."""
    if ergosphere is not None:
        chk = ergosphere_noncharacteristic_check(metric, ergosphere, check_tol)
        if chk.everywhere:
            raise ErgosphereCharacteristic("the ergosphere is characteristic everywhere (Schwarzschild type)")
    return CharacteristicField(metric, PLUS), CharacteristicField(metric, MINUS)


@dataclass
class FlowResult:
    sigma: np.ndarray
    points: np.ndarray
    stop_reason: str
    angle: Optional[np.ndarray] = None


def _flow_rhs(field: CharacteristicField, orientation: float, center=None):
    prev = {}

    def rhs(s, y):
        f = orientation * field(y[:2])
        if center is None:
            return f
        d = y[:2] - center
        return np.array([f[0], f[1], (d[0] * f[1] - d[1] * f[0]) / (d @ d)])

    return rhs


def flow_field(field: CharacteristicField, y0, sigma_end: float, tol: float = 1e-10,
               inner: Optional[ClosedCurve] = None, orientation: float = 1.0,
               max_step: float = 0.05) -> FlowResult:
    """Integrate ``dx/dsigma = orientation * f(x)`` until ``sigma_end``, the ergosphere or the inner curve."""
    y0 = np.asarray(y0, dtype=float)
    prev_dir = [orientation * field(y0)]

    def stop(t, y):
        if inner is not None and inner.contains(y[:2])[0]:
            return "inner"
        d = orientation * field(y[:2])
        if d @ prev_dir[0] < 0:  # consecutive samples more than a quarter turn apart
            raise BranchFlip(f"direction field reversed near {y[:2].tolist()}")
        prev_dir[0] = d
        return ""

    res = dopri5(_flow_rhs(field, orientation), 0.0, y0, sigma_end, rtol=tol, atol=tol, h_max=max_step,
                 stop_check=stop)
    if res.status == "underflow":
        raise StepUnderflow(res.message)
    reason = {"domain": "ergosphere", "stopped": res.message, "done": "sigma_end"}.get(res.status, res.status)
    return FlowResult(res.t, res.y[:, :2], reason)


# ---------------------------------------------------------------------------
# return map and limit cycle
# ---------------------------------------------------------------------------

def _ray_polygon_hit(c, u, poly):
    """Smallest positive ``lam`` with ``c + lam u`` on the closed polyline."""
    v = poly
    w = np.roll(v, -1, axis=0)
    e = w - v
    den = u[0] * e[:, 1] - u[1] * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = v - c
        lam = (d[:, 0] * e[:, 1] - d[:, 1] * e[:, 0]) / den
        mu = (d[:, 0] * u[1] - d[:, 1] * u[0]) / den
    ok = np.isfinite(lam) & (lam > 0) & (mu >= 0) & (mu <= 1)
    if not ok.any():
        raise PreconditionFailed("section ray does not cross the curve")
    return float(lam[ok].min())


@dataclass
class ReturnMap:
    field: CharacteristicField
    orientation: float
    center: np.ndarray
    u: np.ndarray
    inner: ClosedCurve
    tol: float = 1e-11
    max_step: float = 0.05
    max_sigma: float = 200.0

    def trajectory(self, lam: float, record: bool = False):
        x0 = self.center + lam * self.u
        th0 = np.arctan2(self.u[1], self.u[0])
        rhs = _flow_rhs(self.field, self.orientation, self.center)
        f0 = rhs(0.0, np.array([x0[0], x0[1], th0]))
        wind = 1.0 if f0[2] >= 0 else -1.0
        target = th0 + wind * 2 * np.pi
        inner = self.inner
        c = self.center
        rmax2 = float(np.max(np.sum((inner.vertices - c) ** 2, axis=1)))

        def stop(t, y):
            dx, dy = y[0] - c[0], y[1] - c[1]
            if dx * dx + dy * dy <= rmax2 and inner.contains(y[:2])[0]:
                return "inner"
            if wind * (y[2] - th0) < -np.pi / 2:
                return "reversed"
            return ""

        res = dopri5(rhs, 0.0, np.array([x0[0], x0[1], th0]), self.max_sigma, rtol=self.tol, atol=self.tol,
                     h_max=self.max_step, event=lambda t, y: y[2] - target, stop_check=stop, record=record)
        return res

    def __call__(self, lam: float) -> float:
        """Section coordinate of the first return, NaN if the trajectory does not return."""
        res = self.trajectory(lam)
        if res.status != "event":
            return np.nan
        return float((res.y_event[:2] - self.center) @ self.u)


@dataclass
class HorizonReport:
    curve: ClosedCurve
    kind: str
    char_residual: float
    char_residual_mean: float
    sign_value: float
    return_map_slope: float
    fixed_point: float
    family: str
    orientation: float
    section_center: np.ndarray
    section_angle: float
    brackets: List[tuple] = field(default_factory=list)
    fixed_points: List[float] = field(default_factory=list)
    drift: float = 0.0
    tag: str = "planar"
    notes: List[str] = field(default_factory=list)

    def radius_stats(self, center=(0.0, 0.0)):
        r = np.linalg.norm(self.curve.vertices - np.asarray(center), axis=1)
        return float(r.min()), float(r.mean()), float(r.max())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tag": self.tag,
            "char_residual": self.char_residual,
            "char_residual_mean": self.char_residual_mean,
            "sign_value": self.sign_value,
            "return_map_slope": self.return_map_slope,
            "fixed_point": self.fixed_point,
            "fixed_points": list(self.fixed_points),
            "brackets": [list(b) for b in self.brackets],
            "family": self.family,
            "orientation": self.orientation,
            "section_center": list(map(float, self.section_center)),
            "section_angle": self.section_angle,
            "drift": self.drift,
            "notes": list(self.notes),
            "curve": {"vertices": self.curve.vertices.tolist(), "normals": self.curve.normals.tolist()},
        }


def _spectral_curve(points: np.ndarray, length: float, label: str) -> ClosedCurve:
    """Closed curve from samples uniform in arclength; tangents by FFT differentiation."""
    N = len(points)
    k = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        k[N // 2] = 0.0
    P = np.fft.fft(points, axis=0)
    tan = np.real(np.fft.ifft(1j * k[:, None] * P, axis=0))
    pts = points.copy()
    if signed_area(pts) < 0:
        pts = pts[::-1].copy()
        tan = -tan[::-1]
    return ClosedCurve(pts, outward_normals_from_tangents(tan), length / N, label)


def find_limit_cycle(metric: SpacetimeMetric, outer: ClosedCurve, inner: ClosedCurve,
                     section_angle: float = 0.0, n_samples: int = 9, tol: float = 1e-11,
                     fixed_point_tol: float = 1e-12, char_tol: float = CHAR_TOL,
                     sign_floor: float = SIGN_FLOOR, h_curve: float = 0.005,
                     ergo_check_tol: float = 1e-6, families=(PLUS, MINUS)) -> HorizonReport:
    """Locate the limit-cycle event horizon between ``outer`` (ergosphere) and ``inner``."""
    notes = []
    chk = ergosphere_noncharacteristic_check(metric, outer, ergo_check_tol)
    if chk.everywhere:
        raise ErgosphereCharacteristic(
            f"ergosphere is characteristic at every sampled point (min residual {chk.min_form:.2e}); "
            "Schwarzschild-type geometry is outside the scope of the limit-cycle finder")
    if chk.status != "NonCharacteristic":
        msg = (f"ergosphere is characteristic at {len(chk.points)} of {len(outer)} sampled points; "
               "the existence argument does not apply there")
        warnings.warn(msg)
        notes.append(msg)
    trapped = trapped_condition_check(metric, inner)
    if trapped == "Mixed":
        raise PreconditionFailed("forward cones on the inner curve neither all leave nor all enter it")

    c = inner.centroid()
    u = np.array([np.cos(section_angle), np.sin(section_angle)])
    lam_in = _ray_polygon_hit(c, u, inner.vertices)
    lam_out = _ray_polygon_hit(c, u, outer.vertices)
    if lam_out <= lam_in:
        raise PreconditionFailed("inner curve is not inside the ergosphere along the section")
    delta = 1e-3 * (lam_out - lam_in)
    lams = np.linspace(lam_in + delta, lam_out - delta, n_samples)

    # family and orientation are chosen operationally: the first combination
    # whose trajectories return from every sample wins, otherwise the one
    # returning most often
    best = None
    for fam in families:
        for orient in (1.0, -1.0):
            rm = ReturnMap(CharacteristicField(metric, fam), orient, c, u, inner, tol)
            P = np.array(pmap(rm, lams))
            ndef = int(np.sum(np.isfinite(P)))
            if best is None or ndef > best[0]:
                best = (ndef, rm, P)
            if ndef == len(lams):
                break
        if best[0] == len(lams):
            break
    ndef, rm, P = best
    if ndef < 2:
        raise NoSignChange("return map undefined on the section: no family returns to it")
    F = P - lams
    brackets = []
    idx = np.nonzero(np.isfinite(F))[0]
    for i0, i1 in zip(idx[:-1], idx[1:]):
        if i1 != i0 + 1:
            continue
        if F[i0] == 0.0:
            brackets.append((lams[i0], lams[i0]))
        elif F[i0] * F[i1] < 0:
            brackets.append((lams[i0], lams[i1]))
    if np.isfinite(F[-1]) and F[-1] == 0.0:
        brackets.append((lams[-1], lams[-1]))
    if not brackets:
        raise NoSignChange(f"P(r) - r keeps one sign on the {ndef} sampled section points where P is defined")
    g = lambda lam: rm(lam) - lam  # noqa: E731
    roots = [a if a == b else brentq(g, a, b, xtol=fixed_point_tol, rtol=1e-15) for a, b in brackets]
    if len(roots) > 1:
        notes.append(f"{len(roots)} fixed points of the return map; the outermost is reported")
    lam_star = max(roots)

    # one revolution from the fixed point: first to get its length, then resampled uniformly
    first = rm.trajectory(lam_star, record=False)
    L = float(first.t_event)
    drift = float(np.linalg.norm(first.y_event[:2] - (c + lam_star * u)))
    N = max(64, int(np.ceil(L / h_curve)))
    x0 = np.array([*(c + lam_star * u), 0.0])
    rhs = _flow_rhs(rm.field, rm.orientation, c)
    uni = dopri5(rhs, 0.0, x0, L, fixed_h=L / N)
    pts = uni.y[:-1, :2][:N]
    curve = _spectral_curve(pts, L, "horizon")

    kind, res, s = classify_horizon(metric, curve, char_tol, sign_floor)
    # return-map slope by central differences
    hs = 1e-4 * (lam_out - lam_in)
    pp, pm = rm(lam_star + hs), rm(lam_star - hs)
    slope = float((pp - pm) / (2 * hs)) if np.isfinite(pp) and np.isfinite(pm) else np.nan
    return HorizonReport(curve, kind, res.max, res.mean, float(np.min(np.abs(s))), slope, lam_star,
                         rm.field.family, rm.orientation, c, float(section_angle), brackets, roots, drift,
                         notes=notes)


def rotating_horizon(metric: SpacetimeMetric, outer: ClosedCurve, inner: ClosedCurve, **kw) -> HorizonReport:
    """Limit-cycle horizon of an axisymmetric metric on its meridional ``(rho, z)`` block.

    The result describes the surface ``curve x S^1 x R``.
    """
    if isinstance(metric, KerrCylindricalMetric):
        metric = metric.meridional()
    if metric.n != 2:
        raise ValueError("expected a meridional (rho, z) metric")
    rep = find_limit_cycle(metric, outer, inner, **kw)
    rep.tag = "rotating"
    return rep


def circle(radius: float, n: int = 720, center=(0.0, 0.0), label: str = "circle") -> ClosedCurve:
    t = 2 * np.pi * np.arange(n) / n
    v = np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], 1)
    return ClosedCurve(v, np.stack([np.cos(t), np.sin(t)], 1), 2 * np.pi * radius / n, label)
