"""Ergosphere fields and curves.

The ergosphere of a stationary metric is the zero set of the spatial-block
determinant ``Delta = det[g^{jk}]_{j,k>=1}``; for axisymmetric metrics the
restricted version ``Delta_1`` uses only the ``(rho, z)`` block.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .curves import ClosedCurve, ContourResult, extract_contour, outward_normals_from_tangents, signed_area
from .errors import NotFound
from .metrics import (KerrCylindricalMetric, KerrMeridionalMetric, SpacetimeMetric, kerr_horizon_radii,
                      kerr_r)

__all__ = ["ScalarField2D", "delta", "g00_covariant", "restricted_delta1", "kerr_r", "kerr_delta1",
           "kerr_ergosphere_curves", "kerr_horizon_curve", "field_for", "find_ergosphere",
           "kerr_delta1_scale", "KerrVerification", "verify_kerr"]


@dataclass(frozen=True)
class ScalarField2D:
    fn: Callable[[np.ndarray], np.ndarray]
    label: str  # Delta, Delta1 or G00

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))


def delta(metric: SpacetimeMetric, x, strict: bool = True):
    """Determinant of the spatial block of ``g^{jk}``."""
    g = metric.g_up(x, strict=strict)
    return np.linalg.det(g[..., 1:, 1:]) if np.all(np.isfinite(g)) else _nan_det(g[..., 1:, 1:])


def _nan_det(b):
    out = np.full(b.shape[:-2], np.nan)
    ok = np.all(np.isfinite(b), axis=(-1, -2))
    out[ok] = np.linalg.det(b[ok])
    return out


def g00_covariant(metric: SpacetimeMetric, x, strict: bool = True):
    """``g_{00}``, the (0,0) entry of the inverse matrix, by cofactors."""
    g = metric.g_up(x, strict=strict)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _nan_det(g[..., 1:, 1:]) / _nan_det(g)


def restricted_delta1(metric: SpacetimeMetric, rho, z, strict: bool = True):
    """``g^{11} g^{22} - (g^{12})^2`` of the ``(rho, z)`` block.

    Two-dimensional metrics are taken to already live on the meridional plane.
    For three-dimensional cylindrical metrics the value at negative ``rho`` is
    obtained from evenness in ``rho``.
    """
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    p = np.stack(np.broadcast_arrays(rho, z), axis=-1)
    if isinstance(metric, KerrCylindricalMetric):
        return delta(metric.meridional(), p, strict)
    if metric.n == 2:
        return delta(metric, p, strict)
    rho_floor = getattr(metric, "rho_floor", 1e-6)
    q = np.concatenate([np.maximum(np.abs(p[..., :1]), 2 * rho_floor), p[..., 1:2],
                        np.zeros(p.shape[:-1] + (1,))], axis=-1)
    g = metric.g_up(q, strict=strict)
    return _nan_det(g[..., 1:3, 1:3])


def kerr_delta1(m: float, a: float, rho, z):
    """Closed form of ``Delta_1`` for Kerr."""
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    r = kerr_r(np.stack(np.broadcast_arrays(rho, z), -1), a)
    S = r ** 4 + a * a * z * z
    return 1.0 - 2 * m * r ** 5 * rho ** 2 / (S * (r * r + a * a) ** 2) - 2 * m * r * z * z / S


def field_for(metric: SpacetimeMetric, label: str = "Delta") -> ScalarField2D:
    """NaN-tolerant scalar field on the plane for contouring."""
    if label == "Delta":
        return ScalarField2D(lambda x: delta(metric, x, strict=False), "Delta")
    if label == "G00":
        return ScalarField2D(lambda x: g00_covariant(metric, x, strict=False), "G00")
    if label == "Delta1":
        return ScalarField2D(lambda x: restricted_delta1(metric, x[..., 0], x[..., 1], strict=False), "Delta1")
    raise ValueError(f"unknown field label {label!r}")


def find_ergosphere(metric: SpacetimeMetric, bbox, h: float, label: Optional[str] = None) -> ContourResult:
    """Contour the ergosphere field of a planar (or meridional) metric."""
    if label is None:
        label = "Delta1" if isinstance(metric, KerrCylindricalMetric) else "Delta"
    return extract_contour(field_for(metric, label), bbox, h, label=label)


# ---------------------------------------------------------------------------
# Kerr closed forms
# ---------------------------------------------------------------------------

def _oblate_point(r, alpha, a):
    return np.stack([np.sqrt(r * r + a * a) * np.sin(alpha), r * np.cos(alpha)], axis=-1)


def _uniform_closed(curve_fn, h_curve, label, n_dense=20000):
    """Sample a closed parametric curve ``alpha -> (rho, z)`` uniformly in arclength."""
    al = np.linspace(0.0, 2 * np.pi, n_dense + 1)
    P = curve_fn(al)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
    L = s[-1]
    N = max(16, int(np.ceil(1.02 * L / h_curve)))
    alpha = np.interp(np.linspace(0.0, L, N, endpoint=False), s, al)
    pts = curve_fn(alpha)
    d = 1e-6
    tan = (curve_fn(alpha + d) - curve_fn(alpha - d)) / (2 * d)
    if signed_area(pts) < 0:
        pts = pts[::-1].copy()
        tan = -tan[::-1]
    return ClosedCurve(pts, outward_normals_from_tangents(tan), h_curve, label)


def kerr_ergosphere_curves(m: float, a: float, which: str = "outer", h_curve: float = 0.01) -> ClosedCurve:
    """Outer or inner Kerr ergosphere in the meridional ``(rho, z)`` plane.

    Parametrised as ``rho = sqrt(r^2+a^2) sin(alpha)``, ``z = r cos(alpha)``
    with ``r(alpha) = m +- sqrt(m^2 - a^2 cos^2 alpha)``, which solves
    ``r^4 + a^2 z^2 - 2 m r^3 = 0`` exactly.
    """
    if which not in ("outer", "inner"):
        raise ValueError("which must be 'outer' or 'inner'")
    if not (0.0 <= a < m):
        raise NotFound(f"no separated {which} ergosphere for a={a}, m={m}")
    sgn = 1.0 if which == "outer" else -1.0

    def curve(al):
        r = m + sgn * np.sqrt(np.maximum(m * m - a * a * np.cos(al) ** 2, 0.0))
        return _oblate_point(r, al, a)

    c = _uniform_closed(curve, h_curve, f"kerr_ergosphere_{which}")
    r = kerr_r(c.vertices, a)
    res = np.abs(r ** 4 + a * a * c.vertices[:, 1] ** 2 - 2 * m * r ** 3) / max(m, 1e-300) ** 4
    if which == "inner" and a == 0.0:
        raise NotFound("inner ergosphere degenerates to a point for a=0")
    if np.max(res) > 1e-10:
        raise NotFound(f"{which} ergosphere residual {np.max(res):.2e} above tolerance")
    return c


def kerr_horizon_curve(m: float, a: float, which: str = "outer", h_curve: float = 0.01) -> ClosedCurve:
    """The surface ``r = r_+`` (or ``r_-``) drawn in the meridional plane."""
    rp, rm = kerr_horizon_radii(m, a)
    r = rp if which == "outer" else rm
    if r <= 0:
        raise NotFound("degenerate horizon")
    return _uniform_closed(lambda al: _oblate_point(np.full_like(al, r), al, a), h_curve, f"kerr_horizon_{which}")


def kerr_delta1_scale(m: float, a: float, rho, z):
    """Sum of the magnitudes of the three terms of ``kerr_delta1`` (its natural size at a point)."""
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    r = kerr_r(np.stack(np.broadcast_arrays(rho, z), -1), a)
    S = r ** 4 + a * a * z * z
    return 1.0 + 2 * m * r ** 5 * rho ** 2 / (S * (r * r + a * a) ** 2) + 2 * m * r * z * z / S


@dataclass
class KerrVerification:
    m: float
    a: float
    r_plus: float
    r_minus: float
    max_delta1: dict          # surface -> max |Delta_1| / local scale on sampled points (closed form)
    max_delta1_metric: dict   # same, Delta_1 evaluated from the metric coefficients
    contour_error: dict       # surface -> max |kerr_r(contour) - r_surface|
    ergosphere_offset: Optional[float] = None   # a = 0 only: max |r - 2m| on the outer ergosphere contour
    n_points: int = 200

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_kerr(m: float = 1.0, a: float = 0.0, n_points: int = 200, h: float = 0.01,
                bbox=None) -> KerrVerification:
    """Check ``Delta_1 = 0`` on ``r = r_+-`` and recover both surfaces by contouring ``Delta_1``."""
    from .metrics import kerr_cylindrical

    rp, rm = kerr_horizon_radii(m, a)
    M = kerr_cylindrical(m, a)
    surfaces = {"r_plus": rp} if rm <= 0 else {"r_plus": rp, "r_minus": rm}
    al = (np.arange(n_points) + 0.5) * np.pi / n_points   # meridian, poles excluded
    md, mdm = {}, {}
    for name, r in surfaces.items():
        P = _oblate_point(np.full_like(al, r), al, a)
        sc = kerr_delta1_scale(m, a, P[:, 0], P[:, 1])
        md[name] = float(np.max(np.abs(kerr_delta1(m, a, P[:, 0], P[:, 1])) / sc))
        mdm[name] = float(np.max(np.abs(restricted_delta1(M, P[:, 0], P[:, 1])) / sc))
    L = 1.25 * (rp + a) + 0.1
    bbox = (np.array([-L, -L]), np.array([L, L])) if bbox is None else bbox
    res = find_ergosphere(M, bbox, h)
    err = {name: np.inf for name in surfaces}
    for c in res.curves:
        rc = kerr_r(c.vertices, a)
        name = min(surfaces, key=lambda k: abs(np.median(rc) - surfaces[k]))
        err[name] = min(err[name], float(np.max(np.abs(rc - surfaces[name]))))
    ergo_off = None
    if a == 0.0:
        # outer ergosphere from g_00 = 0, i.e. r^4 + a^2 z^2 - 2 m r^3 = 0, contoured as a field
        fn = lambda x: (lambda r: r ** 4 + a * a * x[..., 1] ** 2 - 2 * m * r ** 3)(kerr_r(x, a))  # noqa: E731
        ec = extract_contour(fn, bbox, h, label="kerr_ergosphere")
        if ec.curves:
            v = max(ec.curves, key=lambda c: c.area()).vertices
            ergo_off = float(np.max(np.abs(kerr_r(v, a) - 2 * m)))
    return KerrVerification(float(m), float(a), float(rp), float(rm), md, mdm, err, ergo_off, n_points)
