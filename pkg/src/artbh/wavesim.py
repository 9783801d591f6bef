"""Finite-difference evolution of the wave equation on a 2D grid.

The divergence-form equation with stationary coefficients a^{jk} = sqrt|g| g^{jk}
is written as a first-order system in (u, pi), pi = a^{00} u_t + a^{0k} u_k:

    u_t  = pi / a00 - beta . grad u                 beta = a^{0k} / a^{00}
    pi_t = div(P grad u - beta pi)                  P = -(a^{jk} - a^{j0} a^{0k} / a^{00})

This is equivalent to the second-order form (the mixed t-x terms are carried by
``beta``) and keeps the update explicit as long as a^{00} > 0.  All spatial
derivatives use one centred difference operator, time stepping is leapfrog
started by one RK4 step; see ``_kernels`` for why a single operator matters
near horizons.  Cubic-ramp sponges absorb waves at the outer box and inside a
core disc around a coordinate singularity.

Region energies use node-in-polygon masks against a horizon curve; they are
used to check that a black hole keeps interior data inside and that a white
hole keeps exterior data out.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import shapely
from scipy.optimize import minimize_scalar

from . import _kernels as K
from .curves import ClosedCurve
from .errors import CFLViolation, NonPositiveG00, NumericalBlowup, OutOfDomain, PreconditionFailed
from .metrics import SpacetimeMetric

TRUNC = 1e-12          # Gaussian pulses are cut where they fall below this
FLUSH = 1e-30          # kernel values below this are set to zero (avoids subnormals)
SAFETY = 0.5
MIN_SPONGE_CELLS = 8


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------
@dataclass
class Grid2D:
    """Uniform node-centred grid; ``nx``/``ny`` count cells, so there are (nx+1)(ny+1) nodes."""

    lo: np.ndarray
    hi: np.ndarray
    h: float
    nx: int
    ny: int
    masks: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def bbox(self):
        return (self.lo.copy(), self.hi.copy())

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1)

    @property
    def x(self):
        return self.lo[0] + self.h * np.arange(self.nx + 1)

    @property
    def y(self):
        return self.lo[1] + self.h * np.arange(self.ny + 1)

    def nodes(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def index_of(self, p) -> tuple:
        i = int(round((p[0] - self.lo[0]) / self.h))
        j = int(round((p[1] - self.lo[1]) / self.h))
        return i, j


def make_grid(bbox, h: float) -> Grid2D:
    lo = np.asarray(bbox[0], float)
    hi = np.asarray(bbox[1], float)
    w = hi - lo
    n = np.rint(w / h).astype(int)
    if np.any(n < 4) or np.any(np.abs(n * h - w) > 1e-9 * np.max(np.abs(w))):
        raise PreconditionFailed(f"box {w.tolist()} is not a whole number of cells of size {h}")
    return Grid2D(lo, hi, float(h), int(n[0]), int(n[1]))


def default_sponge(h: float) -> float:
    return max(0.1, MIN_SPONGE_CELLS * h)


def cubic_ramp(d: np.ndarray, width: float, sigma_max: float) -> np.ndarray:
    """Damping ``sigma_max * ((width - d)/width)^3`` for depth ``d < width`` into a sponge, else 0."""
    s = np.clip((width - d) / width, 0.0, 1.0)
    return sigma_max * s ** 3


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------
@dataclass
class Coefficients:
    grid: Grid2D
    dt: float
    dt_bound: float
    ia00: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    pxx: np.ndarray
    pyy: np.ndarray
    pxy: np.ndarray
    sigma: np.ndarray
    unit: bool
    c_max: float
    beta_max: float
    ko: float = 0.0

    def __post_init__(self):
        self.set_dt(self.dt)

    def set_dt(self, dt: float):
        if dt > self.dt_bound * (1 + 1e-12):
            raise CFLViolation(f"dt={dt:.6g} exceeds the stability bound {self.dt_bound:.6g}")
        self.dt = float(dt)
        sd = self.sigma.astype(float) * self.dt
        self.fa = ((1.0 - sd) / (1.0 + sd)).astype(self.dtype)
        self.fb = (1.0 / (1.0 + sd)).astype(self.dtype)

    @property
    def dtype(self):
        return self.bx.dtype

    def scalars(self):
        """(1/h, dt) in the storage precision, so compiled kernels do not mix precisions."""
        f = self.dtype.type
        return f(1.0 / self.grid.h), f(self.dt)

    def constants(self) -> np.ndarray:
        """Stencil constants for the leapfrog kernels in the storage precision."""
        ih = 1.0 / self.grid.h
        return np.array([0.5 * ih, 0.25 * ih * ih, 2.0 * self.dt, -self.ko * ih / 16.0, 4.0, 12.0, FLUSH, 0.0],
                        self.dtype)

    def rhs(self, u, p, sponge: bool = True):
        """Semi-discrete right-hand side, optionally with the sponge terms."""
        du = np.empty_like(u)
        dp = np.empty_like(p)
        fx = np.zeros_like(u)
        fy = np.zeros_like(u)
        K.rhs_general(u, p, self.ia00, self.bx, self.by, self.pxx, self.pyy, self.pxy, self.scalars()[0],
                      du, dp, fx, fy)
        if sponge:
            du -= self.sigma * u
            dp -= self.sigma * p
        return du, dp

    def u_t(self, u, p):
        out = np.empty_like(u)
        K.ut_from_state(u, p, self.ia00, self.bx, self.by, self.scalars()[0], out)
        return out


def cfl_bound(h: float, c_max: float, beta_max: float) -> float:
    """Leapfrog bound ``dt <= h / (sqrt2 (c_max + beta_max))``; linear in ``h``.

    The semi-discrete frequencies are (beta.s +- |s|_P)/h with s = sin(k h),
    |s| <= sqrt2, and leapfrog needs dt * max|omega| <= 1.
    """
    return h / (math.sqrt(2.0) * (c_max + beta_max))


def sponge_profile(grid: Grid2D, width: float, sigma_max: float, core: Optional[tuple] = None) -> np.ndarray:
    """Outer cubic-ramp sponge of ``width`` plus an optional core ``(center, radius, ramp)``."""
    if width < MIN_SPONGE_CELLS * grid.h * (1 - 1e-9):
        raise PreconditionFailed(f"sponge narrower than {MIN_SPONGE_CELLS} cells")
    P = grid.nodes()
    d = np.minimum(np.minimum(P[..., 0] - grid.lo[0], grid.hi[0] - P[..., 0]),
                   np.minimum(P[..., 1] - grid.lo[1], grid.hi[1] - P[..., 1]))
    sig = cubic_ramp(d, width, sigma_max)
    if core is not None:
        c, rc, ramp = core
        if ramp < MIN_SPONGE_CELLS * grid.h * (1 - 1e-9):
            raise PreconditionFailed(f"core sponge narrower than {MIN_SPONGE_CELLS} cells")
        r = np.hypot(P[..., 0] - c[0], P[..., 1] - c[1])
        sig = np.maximum(sig, cubic_ramp(r - (rc - ramp), ramp, sigma_max) * (r < rc))
    return sig


def _core_points(P: np.ndarray, core) -> np.ndarray:
    """Nodes inside the core disc are replaced by their radial projection onto its rim."""
    if core is None:
        return P
    c, rc = np.asarray(core[0], float), float(core[1])
    d = P - c
    r = np.hypot(d[..., 0], d[..., 1])
    inner = r < rc
    Q = P.copy()
    rs = np.where(r > 0, r, 1.0)
    u = np.where((r > 0)[..., None], d / rs[..., None], np.array([1.0, 0.0]))
    Q[inner] = c + rc * u[inner]
    return Q


def build_discretization(metric: SpacetimeMetric, grid: Grid2D, dt: Optional[float] = None, *,
                         safety: float = SAFETY, sponge_width: Optional[float] = None, sigma_max: float = 40.0,
                         core: Optional[tuple] = None, ko: float = 0.0, dtype=np.float64) -> Coefficients:
    """Per-node stepping coefficients for ``metric`` on ``grid``.

    Parameters
    ----------
    core : (center, radius, ramp), optional
        Disc treated as a sponge; the metric is frozen at its rim inside it so
        that coordinate singularities never enter the stencil.
    ko : float
        Kreiss-Oliger dissipation strength (0 disables it).
    dtype : float64 or float32
        Storage precision of fields and coefficients; energies are always
        accumulated in double precision.

    Raises
    ------
    NonPositiveG00, CFLViolation, OutOfDomain
    """
    if metric.n != 2:
        raise PreconditionFailed("the wave simulator works on 2D metrics only")
    width = default_sponge(grid.h) if sponge_width is None else sponge_width
    sig = sponge_profile(grid, width, sigma_max, core)
    P = _core_points(grid.nodes(), core)
    g = metric.g_up(P, strict=False)
    bad = ~np.all(np.isfinite(g), axis=(-2, -1))
    if np.any(bad):
        raise OutOfDomain(f"{metric.name} undefined at {int(bad.sum())} grid nodes; enlarge the core", P[bad][0])
    det = np.linalg.det(g)
    if np.any(np.abs(det) < 1e-14):
        raise NonPositiveG00("metric degenerate on the grid")
    a = g / np.sqrt(np.abs(det))[..., None, None]
    a00 = a[..., 0, 0]
    if np.any(a00 <= 0):
        raise NonPositiveG00(f"g^00 <= 0 at {int(np.sum(a00 <= 0))} nodes")
    ia00 = 1.0 / a00
    bx = a[..., 0, 1] * ia00
    by = a[..., 0, 2] * ia00
    Pm = -(a[..., 1:, 1:] - a[..., 1:, :1] * a[..., :1, 1:] * ia00[..., None, None])
    pxx, pyy, pxy = Pm[..., 0, 0], Pm[..., 1, 1], Pm[..., 0, 1]
    lam = 0.5 * (pxx + pyy) + np.sqrt(0.25 * (pxx - pyy) ** 2 + pxy ** 2)
    lam_min = 0.5 * (pxx + pyy) - np.sqrt(0.25 * (pxx - pyy) ** 2 + pxy ** 2)
    if np.any(lam_min <= 0):
        raise PreconditionFailed("spatial principal part not elliptic on the grid")
    c_max = float(np.sqrt(np.max(lam * ia00)))
    beta_max = float(np.max(np.hypot(bx, by)))
    unit = bool(np.max(np.abs(a00 - 1)) < 1e-12 and np.max(np.abs(pxx - 1)) < 1e-12
                and np.max(np.abs(pyy - 1)) < 1e-12 and np.max(np.abs(pxy)) < 1e-12)
    bound = cfl_bound(grid.h, c_max, beta_max)
    if ko > 0:
        # dissipation on the lagged level is forward Euler over 2 dt with rate <= 2 ko / h
        bound = min(bound, grid.h / (4.0 * ko))
    dt = safety * bound if dt is None else float(dt)
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise PreconditionFailed(f"unsupported precision {dtype}")
    C = lambda arr: np.ascontiguousarray(arr, dtype=dtype)
    return Coefficients(grid, dt, bound, C(ia00), C(bx), C(by), C(pxx), C(pyy), C(pxy), C(sig), unit,
                        c_max, beta_max, float(ko))


# ---------------------------------------------------------------------------
# state and time stepping
# ---------------------------------------------------------------------------
@dataclass
class WaveState:
    u_curr: np.ndarray
    pi_curr: np.ndarray
    u_prev: np.ndarray
    pi_prev: np.ndarray
    t: float
    dt: float
    steps: int = 0
    u0_max: float = 0.0
    _scratch: Optional[tuple] = None

    def copy(self) -> "WaveState":
        return WaveState(self.u_curr.copy(), self.pi_curr.copy(), self.u_prev.copy(), self.pi_prev.copy(),
                         self.t, self.dt, self.steps, self.u0_max)


def _rk4(coef: Coefficients, u, p, dt):
    k1 = coef.rhs(u, p)
    k2 = coef.rhs(u + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1])
    k3 = coef.rhs(u + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1])
    k4 = coef.rhs(u + dt * k3[0], p + dt * k3[1])
    un = u + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    pn = p + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    for a in (un, pn):
        _zero_ring(a)
    return un, pn


def _zero_ring(a):
    a[:2, :] = 0.0
    a[-2:, :] = 0.0
    a[:, :2] = 0.0
    a[:, -2:] = 0.0


def init_state(coef: Coefficients, u0: np.ndarray, ut0: Optional[np.ndarray] = None, t0: float = 0.0) -> WaveState:
    """Initial data (u, u_t) at ``t0``; the second level comes from one RK4 step."""
    u0 = np.array(u0, dtype=float)
    ut0 = np.zeros_like(u0) if ut0 is None else np.asarray(ut0, float)
    dtype = coef.dtype
    if u0.shape != coef.grid.shape or ut0.shape != u0.shape:
        raise PreconditionFailed(f"initial data must have shape {coef.grid.shape}")
    h = coef.grid.h
    ux = np.zeros_like(u0)
    uy = np.zeros_like(u0)
    ux[1:-1] = (u0[2:] - u0[:-2]) / (2 * h)
    uy[:, 1:-1] = (u0[:, 2:] - u0[:, :-2]) / (2 * h)
    p0 = (ut0 + coef.bx * ux + coef.by * uy) / coef.ia00
    for a in (u0, p0):
        _zero_ring(a)
    u0 = u0.astype(dtype)
    p0 = p0.astype(dtype)
    u1, p1 = _rk4(coef, u0, p0, dtype.type(coef.dt))
    umax = float(np.max(np.abs(u0)))
    return WaveState(u1.astype(dtype), p1.astype(dtype), u0, p0, t0 + coef.dt, coef.dt, 1, umax)


def reverse(state: WaveState, coef: Coefficients) -> WaveState:
    """Swap time levels so that further steps run backwards (only valid without sponge or flow)."""
    return WaveState(state.u_prev.copy(), -state.pi_prev.copy(), state.u_curr.copy(), -state.pi_curr.copy(),
                     state.t, state.dt, state.steps, state.u0_max)


def step(state: WaveState, coef: Coefficients, n: int = 1) -> WaveState:
    """Advance ``n`` leapfrog steps in place and return the state."""
    if abs(state.dt - coef.dt) > 1e-15 * max(1.0, coef.dt):
        raise PreconditionFailed("state and coefficients disagree on dt")
    nx, ny = state.u_curr.shape
    if state._scratch is None:
        z = lambda *shape: np.zeros(shape, coef.dtype)
        state._scratch = (z(3, ny), z(3, ny), None, None) if coef.unit else (z(3, ny), z(3, ny), z(nx, ny), z(nx, ny))
    r1, r2, w1, w2 = state._scratch
    cst = coef.constants()
    for _ in range(n):
        if coef.unit:
            K.step_unit(state.u_prev, state.pi_prev, state.u_curr, state.pi_curr, coef.bx, coef.by, coef.fa,
                        coef.fb, cst, r1, r2)
        else:
            K.step_general(state.u_prev, state.pi_prev, state.u_curr, state.pi_curr, coef.ia00, coef.bx, coef.by,
                           coef.pxx, coef.pyy, coef.pxy, coef.fa, coef.fb, cst, r1, r2, w1, w2)
        state.u_prev, state.u_curr = state.u_curr, state.u_prev
        state.pi_prev, state.pi_curr = state.pi_curr, state.pi_prev
        state.steps += 1
    state.t += n * coef.dt
    return state


def check_finite(state: WaveState):
    m = float(np.max(np.abs(state.u_curr)))
    if not np.isfinite(m) or (state.u0_max > 0 and m > 1e6 * state.u0_max):
        raise NumericalBlowup(f"max|u| = {m:.3g} at t = {state.t:.4g}")
    return m


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------
def _centred_grad2(u: np.ndarray, h: float) -> np.ndarray:
    """|D u|^2 at interior nodes with the scheme's centred difference (zero on the outer ring)."""
    g = np.zeros(u.shape)
    ux = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * h)
    uy = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * h)
    g[1:-1, 1:-1] = ux * ux + uy * uy
    return g


def energy_norms(u: np.ndarray, ut: np.ndarray, mask: np.ndarray, h: float) -> tuple:
    """(H1 seminorm^2 + L2 norm^2 of u, L2 norm^2 of u_t) over ``mask``.

    Node (midpoint-rule) sums; the gradient is the centred difference of the
    scheme, for which the flat-space energy is conserved by the semi-discrete
    system.
    """
    m = np.asarray(mask, bool)
    u = np.asarray(u, float)
    h2 = h * h
    grad = float(np.sum(_centred_grad2(u, h)[m])) * h2
    l2 = float(np.sum(u[m] ** 2)) * h2
    kin = float(np.sum(np.asarray(ut, float)[m] ** 2)) * h2
    return grad + l2, kin


def energy_parts(u, ut, mask, h) -> dict:
    """Gradient, mass and kinetic parts separately (the conserved flat energy is grad + kin)."""
    m = np.asarray(mask, bool)
    u = np.asarray(u, float)
    h2 = h * h
    return {"grad": float(np.sum(_centred_grad2(u, h)[m])) * h2, "mass": float(np.sum(u[m] ** 2)) * h2,
            "kin": float(np.sum(np.asarray(ut, float)[m] ** 2)) * h2}


@dataclass
class EnergyReport:
    t: np.ndarray
    int_h1: np.ndarray
    int_kin: np.ndarray
    ext_h1: np.ndarray
    ext_kin: np.ndarray
    sup_u: np.ndarray          # sup |u| over the exterior mask
    int_far: Optional[np.ndarray] = None    # energies beyond a band around the curve (NaN if unused)
    ext_far: Optional[np.ndarray] = None

    @property
    def E_int(self):
        return self.int_h1 + self.int_kin

    @property
    def E_ext(self):
        return self.ext_h1 + self.ext_kin

    def rows(self):
        return [(float(t), float(a), float(b), float(s)) for t, a, b, s in zip(self.t, self.E_int, self.E_ext,
                                                                              self.sup_u)]

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write("t,E_int,E_ext,sup_u\n")
            for r in self.rows():
                f.write(",".join(repr(v) for v in r) + "\n")


def region_masks(grid: Grid2D, coef: Coefficients, curve: Optional[ClosedCurve],
                 band: float = 0.0) -> Dict[str, np.ndarray]:
    """Interior/exterior/sponge masks against ``curve`` (cached on the grid).

    With ``band > 0`` two more masks, ``interior_far`` and ``exterior_far``,
    keep only nodes at least ``band`` away from the curve.
    """
    key = (None if curve is None else id(curve), float(band))
    if grid.masks.get("_key") == key:
        return grid.masks
    P = grid.nodes()
    sponge = coef.sigma > 0
    if curve is None:
        inside = np.zeros(grid.shape, bool)
    else:
        poly = shapely.Polygon(curve.vertices)
        inside = shapely.contains_xy(poly, P[..., 0], P[..., 1])
    masks = {"interior": inside & ~sponge, "exterior": ~inside & ~sponge, "sponge": sponge}
    if band > 0 and curve is not None:
        shrunk = shapely.contains_xy(poly.buffer(-band, quad_segs=64), P[..., 0], P[..., 1])
        grown = shapely.contains_xy(poly.buffer(band, quad_segs=64), P[..., 0], P[..., 1])
        masks["interior_far"] = shrunk & ~sponge
        masks["exterior_far"] = ~grown & ~sponge
    masks["_key"] = key
    grid.masks = masks
    return masks


class Recorder:
    """Samples interior/exterior energies and the exterior sup|u| of a running state."""

    def __init__(self, coef: Coefficients, masks):
        self.coef = coef
        self.label = np.zeros(coef.grid.shape, dtype=np.int8)
        self.label[masks["interior"]] = 1
        self.label[masks["exterior"]] = 2
        self.far = None
        if "interior_far" in masks:
            self.far = np.zeros(coef.grid.shape, dtype=np.int8)
            self.far[masks["interior_far"]] = 1
            self.far[masks["exterior_far"]] = 2
        self._out = np.zeros((3, 4))
        self.rows: List[tuple] = []

    def _sums(self, u, p, label):
        c = self.coef
        h = c.grid.h
        K.region_energies(u, p, c.ia00, c.bx, c.by, label, 1.0 / h, h * h, self._out)
        o = self._out
        return o[1, 0] + o[1, 1], o[1, 2], o[2, 0] + o[2, 1], o[2, 2], o[2, 3]

    def sample(self, u, p, t):
        ih1, ik, eh1, ek, sup = self._sums(u, p, self.label)
        fi = fe = np.nan
        if self.far is not None:
            a, b, c, d, _ = self._sums(u, p, self.far)
            fi, fe = a + b, c + d
        self.rows.append((t, ih1, ik, eh1, ek, sup, fi, fe))

    def __call__(self, state: WaveState):
        self.sample(state.u_curr, state.pi_curr, state.t)

    def report(self) -> EnergyReport:
        a = np.array(self.rows, float).reshape(-1, 8)
        return EnergyReport(*(a[:, k] for k in range(8)))


def evolve(state: WaveState, coef: Coefficients, T: float, cadence: float = 0.05,
           callback: Optional[Callable[[WaveState], None]] = None) -> WaveState:
    """Step to time ``T`` calling ``callback`` roughly every ``cadence`` time units and at the end."""
    every = max(1, int(round(cadence / coef.dt)))
    n_total = int(math.ceil((T - state.t) / coef.dt - 1e-9))
    if callback is not None:
        callback(state)
    done = 0
    while done < n_total:
        k = min(every, n_total - done)
        step(state, coef, k)
        done += k
        check_finite(state)
        if callback is not None:
            callback(state)
    return state


# ---------------------------------------------------------------------------
# pulses and experiments
# ---------------------------------------------------------------------------
def gaussian(grid: Grid2D, center, sigma: float, amp: float = 1.0) -> np.ndarray:
    """``amp * exp(-|x-c|^2 / 2 sigma^2)`` truncated to zero below ``TRUNC * amp``."""
    P = grid.nodes()
    r2 = (P[..., 0] - center[0]) ** 2 + (P[..., 1] - center[1]) ** 2
    u = amp * np.exp(-r2 / (2 * sigma ** 2))
    u[u < TRUNC * abs(amp)] = 0.0
    return u


def support_radius(sigma: float) -> float:
    return sigma * math.sqrt(2.0 * math.log(1.0 / TRUNC))


def _curve_radii(curve: ClosedCurve, center):
    d = curve.vertices - np.asarray(center, float)
    r = np.hypot(d[:, 0], d[:, 1])
    return float(r.min()), float(r.max())


def _dist_to_curve(p, curve: ClosedCurve) -> float:
    return float(shapely.distance(shapely.Point(p), shapely.LinearRing(curve.vertices)))


@dataclass
class ContainmentResult:
    kind: str
    side: str
    h: float
    T: float
    dt: float
    leakage: float            # forbidden-region energy at T / initial total energy
    leakage_max: float        # largest sampled forbidden-region energy / initial total energy
    leakage_far: float        # as leakage_max, counting only nodes at least ``band`` from the horizon
    band: float
    E0: float
    report: EnergyReport
    pulse_center: tuple
    pulse_sigma: float
    runtime: float
    grid: Optional[Grid2D] = None

    def summary(self) -> dict:
        return {"kind": self.kind, "pulse_side": self.side, "h": self.h, "T": self.T, "dt": self.dt,
                "leakage": self.leakage, "leakage_max": self.leakage_max, "leakage_far": self.leakage_far,
                "band": self.band, "E0": self.E0, "pulse_center": [float(v) for v in self.pulse_center],
                "pulse_sigma": self.pulse_sigma}


def _default_pulse(curve: ClosedCurve, side: str, sigma: float, h: float, center, core_r: float, L_active: float):
    """Pulse centre halfway through the room available on ``side`` (inside: along +x, outside: diagonal)."""
    rs = support_radius(sigma)
    rmin, rmax = _curve_radii(curve, center)
    c = np.asarray(center, float)
    if side == "interior":
        lo, hi = core_r + rs, rmin - 5 * h - rs
        if lo > hi:
            raise PreconditionFailed("no room for an interior pulse between core and horizon")
        return tuple(c + 0.5 * (lo + hi) * np.array([1.0, 0.0]))
    lo = rmax + 5 * h + rs
    hi = math.sqrt(2.0) * (L_active - rs)
    if lo > hi:
        raise PreconditionFailed("no room for an exterior pulse inside the box")
    return tuple(c + 0.5 * (lo + hi) / math.sqrt(2.0) * np.array([1.0, 1.0]))


def experiment_setup(metric, horizon: Optional[ClosedCurve], h: float, *, half_width: Optional[float] = None,
                     center=(0.0, 0.0), core_radius: Optional[float] = 0.55, core_ramp: float = 0.25,
                     sponge_width: Optional[float] = None, sigma_max: float = 40.0, ko: float = 0.0,
                     safety: float = SAFETY, dtype=np.float64, band: float = 0.0):
    """Grid, coefficients and masks for an experiment around ``horizon``.

    Returns ``(grid, coef, masks, L)`` with ``L`` the half width of the box.
    """
    c = np.asarray(center, float)
    sponge_width = default_sponge(h) if sponge_width is None else sponge_width
    if half_width is None:
        R = _curve_radii(horizon, c)[1] if horizon is not None else 1.0
        half_width = 1.05 * R + sponge_width
    L = math.ceil(half_width / h - 1e-9) * h
    grid = make_grid((c - L, c + L), h)
    core = None if core_radius is None else (c, core_radius, max(min(core_ramp, core_radius), 8 * h))
    coef = build_discretization(metric, grid, safety=safety, sponge_width=sponge_width, sigma_max=sigma_max,
                                core=core, ko=ko, dtype=dtype)
    masks = region_masks(grid, coef, horizon, band)
    return grid, coef, masks, L


def containment_experiment(metric: SpacetimeMetric, horizon: ClosedCurve, kind: str, pulse_side: Optional[str] = None,
                           T: float = 5.0, h: float = 1 / 256, *, sigma: float = 0.025, pulse_center=None,
                           cadence: float = 0.02, ko: float = 1.0, band: float = 0.02,
                           snapshot: Optional[Callable] = None, **setup) -> ContainmentResult:
    """Evolve a Gaussian pulse on one side of ``horizon`` and measure the energy on the other side.

    ``kind`` is "BlackHole" (pulse inside, exterior forbidden) or "WhiteHole"
    (pulse outside, interior forbidden); ``pulse_side`` overrides the side.
    The leakage ratio is the forbidden-region energy at ``T`` over the initial
    total energy; the largest sampled value and the value beyond a ``band``
    around the horizon are reported as well.
    """
    t0 = time.perf_counter()
    side = pulse_side or {"BlackHole": "interior", "WhiteHole": "exterior"}.get(kind)
    if side not in ("interior", "exterior"):
        raise PreconditionFailed(f"unknown horizon kind {kind!r}")
    grid, coef, masks, L = experiment_setup(metric, horizon, h, ko=ko, band=band, **setup)
    center = setup.get("center", (0.0, 0.0))
    core_r = setup.get("core_radius", 0.55) or 0.0
    L_active = L - (setup.get("sponge_width") or default_sponge(h))
    pc = _default_pulse(horizon, side, sigma, h, center, core_r, L_active) if pulse_center is None \
        else tuple(float(v) for v in pulse_center)
    rs = support_radius(sigma)
    inside_pc = bool(shapely.contains_xy(shapely.Polygon(horizon.vertices), pc[0], pc[1]))
    if inside_pc != (side == "interior") or _dist_to_curve(pc, horizon) < rs + 5 * h - 1e-12:
        raise PreconditionFailed("pulse support must lie on its side at least 5h away from the horizon")
    u0 = gaussian(grid, pc, sigma)
    if np.any((u0 != 0) & masks["sponge"]):
        raise PreconditionFailed("pulse support overlaps a sponge")
    state = init_state(coef, u0)
    rec = Recorder(coef, masks)
    full = ~masks["sponge"]
    E0 = sum(energy_norms(u0, np.zeros_like(u0), full, h))

    def cb(s):
        rec(s)
        if snapshot is not None:
            snapshot(s)

    evolve(state, coef, T, cadence, cb)
    rep = rec.report()
    forb = rep.E_ext if side == "interior" else rep.E_int
    far = rep.ext_far if side == "interior" else rep.int_far
    far_max = float(np.max(far) / E0) if band > 0 else float(np.max(forb) / E0)
    return ContainmentResult(kind, side, h, T, coef.dt, float(forb[-1] / E0), float(np.max(forb) / E0), far_max,
                             band, E0, rep, pc, sigma, time.perf_counter() - t0, grid)


@dataclass
class BoundednessReport:
    t: np.ndarray
    sup_u: np.ndarray
    initial_sup: float
    max_sup: float
    late_sup: float           # largest sup|u| after the transient
    envelope: np.ndarray      # block maxima of sup|u| after the transient
    trend: float              # least-squares slope of the block maxima
    h: float

    @property
    def ratio(self) -> float:
        return self.max_sup / self.initial_sup if self.initial_sup > 0 else 0.0

    def envelope_nonincreasing(self, rtol: float = 0.02) -> bool:
        e = self.envelope
        return bool(np.all(e[1:] <= e[:-1] * (1 + rtol) + 1e-300))

    def summary(self) -> dict:
        return {"initial_sup": self.initial_sup, "max_sup": self.max_sup, "ratio": self.ratio,
                "late_sup": self.late_sup, "trend": self.trend, "h": self.h, "T": float(self.t[-1]),
                "envelope_nonincreasing": self.envelope_nonincreasing()}


def boundedness_probe(metric: SpacetimeMetric, horizon: ClosedCurve, T_long: float = 100.0, h: float = 1 / 64, *,
                      sigma: float = 0.1, pulse_center=None, amp: float = 1.0, cadence: float = 0.1,
                      check: bool = True, transient: float = 10.0, block: float = 10.0, ko: float = 1.0,
                      **setup) -> BoundednessReport:
    """Track sup|u| over the exterior of ``horizon`` for exterior initial data up to ``T_long``.

    ``T_long`` is in units of the light-crossing time of the horizon radius.
    """
    if check:
        from .stability import schwarzschild_type_test
        if not schwarzschild_type_test(metric).is_schwarzschild_type:
            raise PreconditionFailed("boundedness probe needs a Schwarzschild-type horizon")
    # room for the truncated pulse between the horizon and the sponge
    setup.setdefault("half_width", _curve_radii(horizon, setup.get("center", (0.0, 0.0)))[1]
                     + 2.0 * support_radius(sigma))
    grid, coef, masks, L = experiment_setup(metric, horizon, h, ko=ko, **setup)
    rmax = _curve_radii(horizon, setup.get("center", (0.0, 0.0)))[1]
    T_long = T_long * rmax / coef.c_max
    center = setup.get("center", (0.0, 0.0))
    L_active = L - (setup.get("sponge_width") or default_sponge(h))
    pc = _default_pulse(horizon, "exterior", sigma, h, center, 0.0, L_active) if pulse_center is None \
        else pulse_center
    u0 = gaussian(grid, pc, sigma, amp)
    ext = masks["exterior"]
    init = float(np.max(np.abs(u0[ext]))) if np.any(ext) else 0.0
    rec = Recorder(coef, masks)
    if amp != 0:
        state = init_state(coef, u0)
        evolve(state, coef, T_long, cadence, rec)
        rep = rec.report()
        t, sup = rep.t, rep.sup_u
    else:
        t = np.arange(0.0, T_long + cadence / 2, cadence)
        sup = np.zeros_like(t)
    late = t >= transient
    edges = np.arange(transient, t[-1] + 1e-9, block)
    env = np.array([np.max(sup[(t >= a) & (t < a + block)]) for a in edges[:-1]]) if len(edges) > 1 \
        else np.array([float(np.max(sup[late]))] if np.any(late) else [0.0])
    mids = edges[:-1] + block / 2 if len(edges) > 1 else np.array([transient])
    trend = float(np.polyfit(mids, env, 1)[0]) if len(env) > 2 else 0.0
    late_sup = float(np.max(sup[late])) if np.any(late) else 0.0
    return BoundednessReport(t, sup, init, float(np.max(sup)), late_sup, env, trend, h)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------
def write_snapshot(path, grid: Grid2D, u: np.ndarray, t: float):
    """Flat little-endian float64 grid plus a JSON header file ``<path>.json``."""
    path = Path(path)
    np.ascontiguousarray(u, dtype="<f8").tofile(path)
    hdr = {"dims": [int(u.shape[0]), int(u.shape[1])], "bbox": [grid.lo.tolist(), grid.hi.tolist()],
           "t": float(t), "dtype": "float64", "order": "C", "h": grid.h}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(hdr, sort_keys=True, indent=1) + "\n")


def read_snapshot(path):
    path = Path(path)
    hdr = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    u = np.fromfile(path, dtype="<f8").reshape(hdr["dims"])
    return u, hdr
