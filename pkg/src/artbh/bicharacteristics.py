"""Null bicharacteristics, null spatial directions and forward cones.

The Hamiltonian is the principal symbol ``H(x, xi) = sum g^{jk}(x) xi_j xi_k``
over ``j, k = 0..n``.  Bicharacteristics solve

    dx_j/ds = 2 sum_k g^{jk} xi_k,      dxi_p/ds = -sum_{jk} d_p g^{jk} xi_j xi_k,

and since the coefficients do not depend on ``x_0`` the right-hand side for
``xi_0`` is identically zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .curves import ClosedCurve
from .errors import ArtBHError, DomainExit, DriftExceeded, NotInsideErgosphere, PreconditionError, StepUnderflow
from .metrics import SpacetimeMetric
from .ode import dopri5
from .parallel import pmap

MERGE_TOL = 1e-9
J = np.array([[0.0, -1.0], [1.0, 0.0]])  # counterclockwise quarter turn


@dataclass(frozen=True)
class PhaseState:
    x0: float
    x: np.ndarray
    xi0: float
    xi: np.ndarray
    s: float = 0.0

    def pack(self) -> np.ndarray:
        return np.concatenate([[self.x0], self.x, [self.xi0], self.xi])

    @classmethod
    def unpack(cls, y, s=0.0, n=None) -> "PhaseState":
        n = (len(y) - 2) // 2 if n is None else n
        return cls(float(y[0]), np.array(y[1:n + 1]), float(y[n + 1]), np.array(y[n + 2:]), float(s))


@dataclass
class RayPath:
    s: np.ndarray
    y: np.ndarray  # rows (x0, x..., xi0, xi...)
    H: np.ndarray
    h_drift: float
    xi0_drift: float
    stop_reason: str = "done"

    @property
    def n(self) -> int:
        return (self.y.shape[1] - 2) // 2

    @property
    def x0(self):
        return self.y[:, 0]

    @property
    def x(self):
        return self.y[:, 1:self.n + 1]

    @property
    def xi0(self):
        return self.y[:, self.n + 1]

    @property
    def xi(self):
        return self.y[:, self.n + 2:]

    @property
    def states(self):
        return [PhaseState.unpack(r, s, self.n) for r, s in zip(self.y, self.s)]

    def to_rows(self):
        return np.column_stack([self.s, self.y, self.H])


def hamiltonian(metric: SpacetimeMetric, x, xi_full) -> float:
    g = metric.g_up(x)
    xi = np.asarray(xi_full, dtype=float)
    return np.einsum("...j,...jk,...k->...", xi, g, xi)


class CovectorBlowup(ArtBHError):
    pass


def bichar_rhs(metric: SpacetimeMetric, xi_cap: float = np.inf):
    n = metric.n

    def rhs(s, y):
        x = y[1:n + 1]
        xi = y[n + 1:]
        if np.abs(xi).max() > xi_cap:
            raise CovectorBlowup("covector blow-up")
        g, dg = metric.g_and_grad_point(x)
        out = np.empty_like(y)
        out[:n + 1] = 2.0 * g @ xi
        out[n + 1] = 0.0
        out[n + 2:] = -(dg @ xi) @ xi
        return out

    return rhs


def integrate_bicharacteristic(metric: SpacetimeMetric, state0: PhaseState, s_end: float,
                               tol: float = 1e-10, H_tol: float = 1e-8, mode: str = "null",
                               fixed_h: Optional[float] = None, raise_on_exit: bool = False,
                               max_step: float = np.inf, event=None, xi_growth_cap: float = 1e8) -> RayPath:
    """Integrate the Hamiltonian system from ``state0`` up to ``s_end``.

    In ``null`` mode the initial state must satisfy ``|H| <= H_tol`` and the
    whole path must keep ``|H| <= 100 H_tol``, where ``|H|`` is divided by
    ``max(1, |xi(s)|^2 / |xi(0)|^2)`` since the Hamiltonian is quadratic.  A path that leaves the domain
    stops early with ``stop_reason='domain'`` (or raises with
    ``raise_on_exit``).  Near a horizon the covector of a ray with
    ``xi_0 = 0`` can grow without bound in finite ``s``; once ``|xi|`` exceeds
    ``xi_growth_cap`` times its initial size the path stops with
    ``stop_reason='blowup'``.
    """
    y0 = state0.pack()
    n = metric.n
    H0 = float(hamiltonian(metric, state0.x, y0[n + 1:]))
    if mode == "null" and abs(H0) > H_tol:
        raise PreconditionError(f"initial covector is not null: |H|={abs(H0):.3e} > {H_tol:.1e}")
    cap = xi_growth_cap * max(np.abs(y0[n + 1:]).max(), 1e-300)
    res = dopri5(bichar_rhs(metric, cap), state0.s, y0, s_end, rtol=tol, atol=tol, fixed_h=fixed_h,
                 h_max=max_step, event=event)
    if res.status == "underflow":
        raise StepUnderflow(res.message)
    status = "blowup" if (res.status == "domain" and "blow-up" in res.message) else res.status
    if status == "domain" and raise_on_exit:
        raise DomainExit(res.t[-1], res.y[-1, 1:n + 1])
    H = np.array([hamiltonian(metric, r[1:n + 1], r[n + 1:]) for r in res.y])
    # H is quadratic in xi: measure drift relative to the growth of the covector
    growth = np.maximum(1.0, np.sum(res.y[:, n + 1:] ** 2, axis=1) / max(np.sum(y0[n + 1:] ** 2), 1e-300))
    path = RayPath(res.t, res.y, H, float(np.max(np.abs(H) / growth)), float(np.max(np.abs(res.y[:, n + 1] - y0[n + 1]))),
                   status)
    if mode == "null" and path.h_drift > 100 * H_tol:
        raise DriftExceeded(f"|H| reached {path.h_drift:.3e}")
    return path


# ---------------------------------------------------------------------------
# two-dimensional null geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NullDirections:
    count: int
    etas: np.ndarray  # (count, 2) unit covectors, polar angle in [0, pi), ascending
    double: bool
    delta: float


def null_spatial_directions(metric: SpacetimeMetric, x, merge_tol: float = MERGE_TOL) -> NullDirections:
    """Real roots of ``g^{11} e1^2 + 2 g^{12} e1 e2 + g^{22} e2^2 = 0`` on the unit circle."""
    G = metric.g_up(x)[1:, 1:]
    a, b, c = G[0, 0], G[0, 1], G[1, 1]
    D = a * c - b * b
    scale = max(abs(a), abs(b), abs(c)) ** 2
    disc = -D / scale
    if disc < -merge_tol:
        return NullDirections(0, np.zeros((0, 2)), False, D)
    if abs(disc) <= merge_tol:
        eta = np.array([-b, a]) if abs(a) >= abs(c) else np.array([c, -b])
        return NullDirections(1, _canon(eta[None, :]), True, D)
    lam, e1, t = _eigen_split(a, b, c)
    etas = np.array([e1 + s * t * (J @ e1) for s in (1.0, -1.0)])
    etas = _canon(etas)
    order = np.argsort(np.arctan2(etas[:, 1], etas[:, 0]))
    return NullDirections(2, etas[order], False, D)


def _canon(etas):
    etas = etas / np.linalg.norm(etas, axis=1, keepdims=True)
    ang = np.arctan2(etas[:, 1], etas[:, 0])
    flip = (ang < 0) | (ang >= np.pi)
    etas[flip] *= -1
    return etas


def _eigen_split(a, b, c):
    """Closed-form eigen split of ``[[a, b], [b, c]]`` (indefinite or degenerate).

    Returns the eigenvalues ``(l1, l2)``, the unit eigenvector ``e1`` of the
    larger one and ``t = sqrt(l1 / |l2|)`` (zero when ``l1 <= 0``).
    """
    phi = 0.5 * np.arctan2(2 * b, a - c)
    e1 = np.array([np.cos(phi), np.sin(phi)])
    m = 0.5 * (a + c)
    r = np.hypot(0.5 * (a - c), b)
    l1, l2 = m + r, m - r
    t = np.sqrt(max(l1, 0.0) / abs(l2)) if l2 != 0 else np.inf
    return (l1, l2), e1, t


def null_pair(g: np.ndarray):
    """Forward-oriented null spatial covectors and cone edges for a 3x3 ``g_up``.

    Returns ``(eta, d, forward_flag)``; row 0 is the "plus" family and row 1
    the "minus" family.  In the draining bathtub the plus family is the one
    whose projected curves spiral onto the horizon, with direction
    ``(A^2 - r^2, A B + r sqrt(A^2 + B^2 - r^2))`` in polar components.
    ``eta`` is oriented so that
    ``dx_0/ds = 2 g^{0k} eta_k >= 0`` and ``d`` is the unit spatial direction
    of the corresponding forward bicharacteristic.  The labels are continuous
    in ``x`` and stay well defined where the two branches merge.
    """
    G = g[1:, 1:]
    g0 = g[0, 1:]
    (l1, l2), e1, t = _eigen_split(G[0, 0], G[0, 1], G[1, 1])
    e2 = J @ e1
    eta = np.empty((2, 2))
    d = np.empty((2, 2))
    fwd = np.empty(2, dtype=bool)
    for i, s in enumerate((-1.0, 1.0)):
        e = (e1 + s * t * e2) / np.sqrt(1.0 + t * t)
        if g0 @ e < 0:
            e = -e
        fwd[i] = abs(g0 @ e) > 1e-12 * max(1.0, np.abs(g0).max())
        eta[i] = e
        # G e = -s t |l2| J e, so the forward projection is along -s J e
        d[i] = -s * (J @ e)
    return eta, d, fwd


def forward_null_covector(g, s: float):
    """Scalar-math variant of :func:`null_pair` for one branch (``s=-1`` plus, ``s=+1`` minus).

    Returns ``(eta_1, eta_2)``.
    """
    a, b, c = float(g[1, 1]), float(g[1, 2]), float(g[2, 2])
    phi = 0.5 * math.atan2(2.0 * b, a - c)
    cp, sp = math.cos(phi), math.sin(phi)
    mid = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    l1, l2 = mid + rad, mid - rad
    t = math.sqrt(max(l1, 0.0) / abs(l2)) if l2 != 0.0 else math.inf
    nrm = math.sqrt(1.0 + t * t)
    e0 = (cp - s * t * sp) / nrm
    e1 = (sp + s * t * cp) / nrm
    if g[0, 1] * e0 + g[0, 2] * e1 < 0:
        e0, e1 = -e0, -e1
    return e0, e1


@dataclass(frozen=True)
class ConeProjection:
    directions: np.ndarray  # rows: plus family, minus family
    covectors: np.ndarray
    x0_increasing: np.ndarray
    delta: float


def forward_cone_projections(metric: SpacetimeMetric, y, merge_tol: float = MERGE_TOL) -> ConeProjection:
    """Spatial directions of the two forward null bicharacteristics with ``xi_0 = 0``."""
    g = metric.g_up(y)
    G = g[1:, 1:]
    D = float(np.linalg.det(G))
    if D / np.max(np.abs(G)) ** 2 > merge_tol:
        raise NotInsideErgosphere(f"Delta={D:.3e} >= 0 at {np.asarray(y).tolist()}")
    eta, d, fwd = null_pair(g)
    return ConeProjection(d, eta, fwd, D)


def trapped_condition_check(metric: SpacetimeMetric, S1: ClosedCurve) -> str:
    """``AllOutward``, ``AllInward`` (trapped) or ``Mixed`` for the forward cones along ``S1``."""
    signs = []
    for y, N in zip(S1.vertices, S1.normals):
        g = metric.g_up(y)
        G = g[1:, 1:]
        if np.linalg.det(G) >= 0:
            raise NotInsideErgosphere(f"Delta >= 0 at vertex {y.tolist()}")
        _, d, _ = null_pair(g)
        signs.append(d @ N)
    signs = np.array(signs)
    if np.all(signs > 0):
        return "AllOutward"
    if np.all(signs < 0):
        return "AllInward"
    return "Mixed"


def timelike_test(metric: SpacetimeMetric, x, velocity) -> bool:
    """``g_{jk} v^j v^k > 0`` and ``v^0 > 0``."""
    g = metric.g_up(x)
    v = np.asarray(velocity, dtype=float)
    q = v @ np.linalg.solve(g, v)
    return bool(q > 0 and v[0] > 0)


# ---------------------------------------------------------------------------
# influence fans
# ---------------------------------------------------------------------------

def future_null_covector(g: np.ndarray, xi_spatial) -> np.ndarray:
    """Complete a spatial covector to a null covector with ``dx_0/ds > 0``."""
    xi = np.asarray(xi_spatial, dtype=float)
    g00 = g[0, 0]
    b = g[0, 1:] @ xi
    c = xi @ g[1:, 1:] @ xi
    disc = b * b - g00 * c
    xi0 = (-b + np.sqrt(max(disc, 0.0))) / g00
    # the other root in cancellation-free form when -b and sqrt(disc) nearly cancel
    if b > 0 and disc > 0:
        xi0 = c / (-b - np.sqrt(disc)) if (-b - np.sqrt(disc)) != 0 else xi0
    return np.concatenate([[xi0], xi])


@dataclass
class InfluenceFan:
    seeds: np.ndarray
    t_end: float
    rays: list  # list over seeds of list of RayPath

    def wavefront(self, t: float, seed: int = 0) -> np.ndarray:
        """Ray positions at time ``x_0 = t`` ordered by initial covector angle (NaN if the ray stopped earlier)."""
        pts = []
        for p in self.rays[seed]:
            x0 = p.x0
            if t > x0[-1] + 1e-12:
                pts.append(np.full(p.n, np.nan))
                continue
            pts.append(np.array([np.interp(t, x0, p.x[:, k]) for k in range(p.n)]))
        return np.array(pts)

    def envelope(self, t: Optional[float] = None, seed: int = 0) -> np.ndarray:
        return self.wavefront(self.t_end if t is None else t, seed)

    def max_radius(self, seed: Optional[int] = None) -> float:
        idx = range(len(self.rays)) if seed is None else [seed]
        return float(max(np.max(np.linalg.norm(p.x, axis=1)) for i in idx for p in self.rays[i]))


def influence_fan(metric: SpacetimeMetric, X, t_end: float, n_rays: int = 256, tol: float = 1e-10,
                  max_step: float = 0.05) -> InfluenceFan:
    """Forward null bicharacteristics from each seed, one per covector angle, run to ``x_0 = t_end``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = metric.n
    if n != 2:
        raise ValueError("influence fans are implemented for planar metrics")
    angles = 2 * np.pi * np.arange(n_rays) / n_rays
    ev = lambda s, y: y[0] - t_end  # noqa: E731

    def one(args):
        x, ang = args
        g = metric.g_up(x)
        xi = future_null_covector(g, [np.cos(ang), np.sin(ang)])
        st = PhaseState(0.0, x, xi[0], xi[1:])
        # s-span bound: dx0/ds >= small, so ample headroom
        path = integrate_bicharacteristic(metric, st, 1e6, tol=tol, H_tol=1e-8, mode="general",
                                          max_step=max_step, event=ev)
        return path

    jobs = [(x, a) for x in X for a in angles]
    out = pmap(one, jobs)
    rays = [out[i * n_rays:(i + 1) * n_rays] for i in range(len(X))]
    return InfluenceFan(X, float(t_end), rays)


# ---------------------------------------------------------------------------
# random null seeds
# ---------------------------------------------------------------------------

def sample_seeds(metric: SpacetimeMetric, n: int, seed: int = 0, radius: float = 2.0):
    """``n`` random spatial points inside the domain and unit spatial covectors.

    Planar metrics are sampled on the annulus ``radius/4 <= |x| <= radius``;
    three-dimensional ones on the box ``[radius/4, radius] x [-radius, radius]
    x [0, 2 pi)`` of cylindrical coordinates (or the cube of half width
    ``radius`` otherwise), skipping points where the metric is undefined and
    directions without a real null completion.
    """
    rng = np.random.default_rng(seed)
    pts, dirs = [], []
    cyl = getattr(metric, "name", "") == "kerr_cyl"
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > 1000 * n:
            raise PreconditionError("could not place the requested number of seeds in the domain")
        if metric.n == 2:
            r = radius * math.sqrt(rng.uniform(1 / 16, 1.0))
            th = rng.uniform(0, 2 * np.pi)
            x = np.array([r * math.cos(th), r * math.sin(th)])
        elif cyl:
            x = np.array([rng.uniform(radius / 4, radius), rng.uniform(-radius, radius), rng.uniform(0, 2 * np.pi)])
        else:
            x = rng.uniform(-radius, radius, metric.n)
        d = rng.normal(size=metric.n)
        d /= np.linalg.norm(d)
        if not bool(metric.inside(x)):
            continue
        g = metric.g_up(x)
        b, c = g[0, 1:] @ d, d @ g[1:, 1:] @ d
        if b * b - g[0, 0] * c < 0:
            continue  # no real null completion of this direction
        pts.append(x)
        dirs.append(d)
    return np.array(pts), np.array(dirs)


@dataclass
class SeedResult:
    x: np.ndarray
    direction: np.ndarray
    h_drift: float
    xi0_drift: float
    stop_reason: str
    s_end: float


def null_seed_suite(metric: SpacetimeMetric, X, directions, s_end: float = 2.0, tol: float = 1e-10,
                    H_tol: float = 1e-8) -> list:
    """Integrate one null bicharacteristic per seed and record its invariant drifts."""

    def one(args):
        x, d = args
        xi = future_null_covector(metric.g_up(x), d)
        st = PhaseState(0.0, np.asarray(x, float), float(xi[0]), xi[1:])
        try:
            p = integrate_bicharacteristic(metric, st, s_end, tol=tol, H_tol=H_tol, mode="general")
        except CovectorBlowup:
            return SeedResult(np.asarray(x), np.asarray(d), np.nan, np.nan, "blowup", 0.0)
        return SeedResult(np.asarray(x), np.asarray(d), p.h_drift, p.xi0_drift, p.stop_reason, float(p.s[-1]))

    return pmap(one, list(zip(np.asarray(X, float), np.asarray(directions, float))))
