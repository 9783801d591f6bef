"""Stationary Lorentzian metrics in contravariant form.

Every metric maps spatial points ``x`` of shape ``(..., n)`` to matrices
``g^{jk}`` of shape ``(..., n+1, n+1)`` with index 0 the time direction and
signature ``(+, -, ..., -)``.  Coefficient derivatives have shape
``(..., n, n+1, n+1)`` where the leading extra axis is the spatial index p of
``d g^{jk} / d x_p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateMetric, OutOfDomain, SuperluminalFlow

Array = np.ndarray

DET_TOL = 1e-14


class FourierSeries:
    """Truncated Fourier series ``b0 + sum_k (b_k cos k t + c_k sin k t)``."""

    def __init__(self, b0: float = 0.0, cos: Sequence[float] = (), sin: Sequence[float] = ()):
        self.b0 = float(b0)
        K = max(len(cos), len(sin))
        self.bc = np.zeros(K)
        self.bs = np.zeros(K)
        self.bc[: len(cos)] = cos
        self.bs[: len(sin)] = sin
        self.is_constant = not (np.any(self.bc) or np.any(self.bs))
        self._terms = [(k + 1, float(self.bc[k]), float(self.bs[k])) for k in range(K)
                       if self.bc[k] or self.bs[k]]

    def scalar(self, t: float) -> tuple[float, float]:
        """Value and derivative at a single angle."""
        val, der = self.b0, 0.0
        for k, bc, bs in self._terms:
            ck, sk = math.cos(k * t), math.sin(k * t)
            val += bc * ck + bs * sk
            der += k * (bs * ck - bc * sk)
        return val, der

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.b0)
        for k in range(len(self.bc)):
            out = out + self.bc[k] * np.cos((k + 1) * t) + self.bs[k] * np.sin((k + 1) * t)
        return out

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for k in range(len(self.bc)):
            kk = k + 1
            out = out - kk * self.bc[k] * np.sin(kk * t) + kk * self.bs[k] * np.cos(kk * t)
        return out

    def to_dict(self) -> dict:
        d = {"b0": self.b0}
        for k in range(len(self.bc)):
            if self.bc[k]:
                d[f"b{k + 1}"] = float(self.bc[k])
            if self.bs[k]:
                d[f"c{k + 1}"] = float(self.bs[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FourierSeries":
        b0 = float(d.get("b0", 0.0))
        cos, sin = {}, {}
        for key, val in d.items():
            if key == "b0":
                continue
            if key[0] not in "bc" or not key[1:].isdigit() or int(key[1:]) < 1:
                raise ValueError(f"bad Fourier coefficient key {key!r}")
            (cos if key[0] == "b" else sin)[int(key[1:])] = float(val)
        K = max(list(cos) + list(sin) + [0])
        return cls(b0, [cos.get(k, 0.0) for k in range(1, K + 1)],
                   [sin.get(k, 0.0) for k in range(1, K + 1)])


def as_fourier(B) -> FourierSeries:
    if isinstance(B, FourierSeries):
        return B
    if isinstance(B, dict):
        return FourierSeries.from_dict(B)
    return FourierSeries(float(B))


def minkowski(n: int) -> Array:
    return np.diag([1.0] + [-1.0] * n)


class SpacetimeMetric:
    """Base class.

    Subclasses implement ``_g(x)`` (vectorised, no domain checking) and may
    implement ``_grad(x)``; otherwise central differences are used.
    """

    n: int = 2
    name: str = "metric"
    length_scale: float = 1.0

    def __init__(self, n: int, name: str, bbox: Optional[tuple] = None, fd_step: Optional[float] = None):
        self.n = int(n)
        self.name = name
        self.bbox = None if bbox is None else (np.asarray(bbox[0], float), np.asarray(bbox[1], float))
        if fd_step is None:
            diam = (np.linalg.norm(self.bbox[1] - self.bbox[0]) if self.bbox is not None
                    else 10.0 * self.length_scale)
            fd_step = 1e-5 * diam
        self.fd_step = float(fd_step)

    # -- to override -------------------------------------------------------
    def _g(self, x: Array) -> Array:
        raise NotImplementedError

    def _grad(self, x: Array) -> Array:
        return self.grad_fd(x, self.fd_step)

    def _inside(self, x: Array) -> Array:
        return np.ones(x.shape[:-1], dtype=bool)

    @property
    def deriv_mode(self) -> str:
        return "analytic" if type(self)._grad is not SpacetimeMetric._grad else "central"

    # -- public ------------------------------------------------------------
    def inside(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        ok = self._inside(x) & np.all(np.isfinite(x), axis=-1)
        if self.bbox is not None:
            ok &= np.all((x >= self.bbox[0]) & (x <= self.bbox[1]), axis=-1)
        return ok

    def check(self, x) -> None:
        x = np.asarray(x, dtype=float)
        ok = self.inside(x)
        if not np.all(ok):
            bad = x[~ok][0] if x.ndim > 1 else x
            raise OutOfDomain(f"{self.name}: point {np.round(bad, 12).tolist()} outside the domain", bad)

    def g_up(self, x, strict: bool = True) -> Array:
        """Contravariant coefficients; out-of-domain points raise or become NaN."""
        x = np.asarray(x, dtype=float)
        if strict:
            self.check(x)
            return self._g(x)
        ok = self.inside(x)
        if np.all(ok):
            return self._g(x)
        out = np.full(x.shape[:-1] + (self.n + 1, self.n + 1), np.nan)
        if np.any(ok):
            out[ok] = self._g(x[ok])
        return out

    def grad_up(self, x, strict: bool = True) -> Array:
        x = np.asarray(x, dtype=float)
        if strict:
            self.check(x)
        return self._grad(x)

    def g_point(self, x) -> Array:
        """Single-point evaluation (subclasses may provide a faster scalar path)."""
        return self.g_up(x)

    def g_and_grad_point(self, x):
        return self.g_up(x), self.grad_up(x)

    def grad_fd(self, x, h: float) -> Array:
        """Central-difference derivatives with step ``h``."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (self.n, self.n + 1, self.n + 1))
        for p in range(self.n):
            e = np.zeros(self.n)
            e[p] = h
            out[..., p, :, :] = (self._g(x + e) - self._g(x - e)) / (2 * h)
        return out

    def describe(self) -> dict:
        return {"family": self.name}


class FlatMetric(SpacetimeMetric):
    def __init__(self, n: int = 2, bbox=None):
        super().__init__(n, "flat", bbox)

    def _g(self, x):
        return np.broadcast_to(minkowski(self.n), x.shape[:-1] + (self.n + 1, self.n + 1)).copy()

    def _grad(self, x):
        return np.zeros(x.shape[:-1] + (self.n, self.n + 1, self.n + 1))


def _const_or_call(f, x):
    if callable(f):
        return np.asarray(f(x), dtype=float)
    return np.full(x.shape[:-1], float(f))


class AcousticMetric(SpacetimeMetric):
    """Acoustic metric ``(1/(rho c)) [[1, v], [v, v v^T - c^2 I]]``.

    ``rho`` and ``c`` are constants or callables of ``x``; ``v`` maps
    ``(..., n)`` to ``(..., n)``.  The optional ``dv`` returns the Jacobian
    ``dv_i/dx_p`` with shape ``(..., n, n)`` (i, p) and is used for analytic
    derivatives when ``rho`` and ``c`` are constant.
    """

    def __init__(self, v: Callable, rho=1.0, c=1.0, n: int = 2, dv: Optional[Callable] = None,
                 bbox=None, name: str = "acoustic", fd_step=None):
        self.v = v
        self.rho = rho
        self.c = c
        self.dv = dv
        super().__init__(n, name, bbox, fd_step)

    @property
    def unit_medium(self) -> bool:
        return (not callable(self.rho) and not callable(self.c)
                and float(self.rho) == 1.0 and float(self.c) == 1.0)

    def _g(self, x):
        rho = _const_or_call(self.rho, x)
        c = _const_or_call(self.c, x)
        v = np.asarray(self.v(x), dtype=float)
        return _acoustic_block(v, rho, c)

    @property
    def deriv_mode(self) -> str:
        return "analytic" if (self.dv is not None and not callable(self.rho) and not callable(self.c)) else "central"

    def _grad(self, x):
        if self.deriv_mode != "analytic":
            return self.grad_fd(x, self.fd_step)
        k = 1.0 / (float(self.rho) * float(self.c))
        v = np.asarray(self.v(x), dtype=float)
        J = np.asarray(self.dv(x), dtype=float)  # (..., i, p)
        n = self.n
        out = np.zeros(x.shape[:-1] + (n, n + 1, n + 1))
        Jp = np.swapaxes(J, -1, -2)  # (..., p, i)
        out[..., :, 0, 1:] = k * Jp
        out[..., :, 1:, 0] = k * Jp
        out[..., :, 1:, 1:] = k * (Jp[..., :, :, None] * v[..., None, None, :]
                                   + v[..., None, :, None] * Jp[..., :, None, :])
        return out

    def flow_vector(self, x):
        """Velocity-form vector V with g = xi + V V^T (unit medium only)."""
        v = np.asarray(self.v(x), dtype=float)
        return np.concatenate([np.ones(v.shape[:-1] + (1,)), v], axis=-1)

    def flow_vector_jac(self, x):
        """``dV^a/dx_p`` with shape ``(..., p, a)``."""
        if self.dv is None:
            h = self.fd_step
            out = np.zeros(x.shape[:-1] + (self.n, self.n + 1))
            for p in range(self.n):
                e = np.zeros(self.n)
                e[p] = h
                out[..., p, 1:] = (np.asarray(self.v(x + e)) - np.asarray(self.v(x - e))) / (2 * h)
            return out
        J = np.asarray(self.dv(x), dtype=float)
        out = np.zeros(x.shape[:-1] + (self.n, self.n + 1))
        out[..., :, 1:] = np.swapaxes(J, -1, -2)
        return out

    def xi(self) -> Array:
        z = np.zeros((self.n + 1, self.n + 1))
        z[1:, 1:] = -np.eye(self.n)
        return z


def _acoustic_block(v, rho, c):
    n = v.shape[-1]
    k = 1.0 / (rho * c)
    g = np.empty(v.shape[:-1] + (n + 1, n + 1))
    g[..., 0, 0] = k
    g[..., 0, 1:] = k[..., None] * v
    g[..., 1:, 0] = k[..., None] * v
    g[..., 1:, 1:] = k[..., None, None] * (v[..., :, None] * v[..., None, :]
                                           - (c * c)[..., None, None] * np.eye(n))
    return g


def acoustic_metric(v: Callable, rho=1.0, c=1.0, n: int = 2, dv=None, bbox=None) -> AcousticMetric:
    if not callable(rho) and float(rho) <= 0:
        raise ValueError("rho must be positive")
    if not callable(c) and float(c) <= 0:
        raise ValueError("c must be positive")
    return AcousticMetric(v, rho, c, n, dv, bbox)


class BathtubMetric(AcousticMetric):
    """Draining bathtub flow ``v = (A/r) r_hat + (B(theta)/r) theta_hat`` with rho = c = 1."""

    def __init__(self, A: float, B=0.0, r_min: float = 0.05, r_max: float = np.inf, bbox=None):
        self.A = float(A)
        self.B = as_fourier(B)
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        if self.r_min <= 0:
            raise ValueError("r_min must be positive")
        self.length_scale = max(1.0, np.hypot(self.A, self.B.b0))
        super().__init__(self._vel, 1.0, 1.0, 2, self._jac, bbox, "bathtub")

    def _inside(self, x):
        r = np.hypot(x[..., 0], x[..., 1])
        return (r >= self.r_min) & (r <= self.r_max)

    def _vel(self, x):
        x1, x2 = x[..., 0], x[..., 1]
        r2 = x1 * x1 + x2 * x2
        B = self.B(np.arctan2(x2, x1))
        return np.stack([(self.A * x1 - B * x2) / r2, (self.A * x2 + B * x1) / r2], axis=-1)

    def _jac(self, x):
        x1, x2 = x[..., 0], x[..., 1]
        r2 = x1 * x1 + x2 * x2
        th = np.arctan2(x2, x1)
        A, B, dB = self.A, self.B(th), self.B.deriv(th)
        q = np.stack([A * x1 - B * x2, A * x2 + B * x1], axis=-1)
        # dq_i/dx_p = [[A, -B], [B, A]] + B'(theta) (-y, x)_i (grad theta)_p
        t = np.stack([-x2, x1], axis=-1)
        dq = np.empty(x.shape[:-1] + (2, 2))
        dq[..., 0, 0] = A
        dq[..., 0, 1] = -B
        dq[..., 1, 0] = B
        dq[..., 1, 1] = A
        dq = dq + (dB / r2)[..., None, None] * t[..., :, None] * t[..., None, :]
        return dq / r2[..., None, None] - 2.0 * q[..., :, None] * x[..., None, :] / (r2 * r2)[..., None, None]

    # scalar fast paths used by the ray and flow integrators
    def _point_vel(self, x):
        x1, x2 = float(x[0]), float(x[1])
        r2 = x1 * x1 + x2 * x2
        r = math.sqrt(r2)
        if not (self.r_min <= r <= self.r_max) or (self.bbox is not None and not self.inside(x)):
            raise OutOfDomain(f"bathtub: point {[x1, x2]} outside the domain", np.array([x1, x2]))
        if self.B.is_constant:
            B, dB = self.B.b0, 0.0
        else:
            B, dB = self.B.scalar(math.atan2(x2, x1))
        A = self.A
        q1, q2 = A * x1 - B * x2, A * x2 + B * x1
        return x1, x2, r2, B, dB, q1 / r2, q2 / r2, q1, q2

    def g_point(self, x):
        _, _, _, _, _, v1, v2, _, _ = self._point_vel(x)
        return np.array([[1.0, v1, v2], [v1, v1 * v1 - 1.0, v1 * v2], [v2, v1 * v2, v2 * v2 - 1.0]])

    def g_and_grad_point(self, x):
        x1, x2, r2, B, dB, v1, v2, q1, q2 = self._point_vel(x)
        A = self.A
        g = np.array([[1.0, v1, v2], [v1, v1 * v1 - 1.0, v1 * v2], [v2, v1 * v2, v2 * v2 - 1.0]])
        c = dB / r2
        d00, d01 = A + c * x2 * x2, -B - c * x2 * x1
        d10, d11 = B - c * x1 * x2, A + c * x1 * x1
        ir2, ir4 = 1.0 / r2, 2.0 / (r2 * r2)
        J = ((d00 * ir2 - q1 * x1 * ir4, d01 * ir2 - q1 * x2 * ir4),
             (d10 * ir2 - q2 * x1 * ir4, d11 * ir2 - q2 * x2 * ir4))
        dg = np.zeros((2, 3, 3))
        for p in range(2):
            a1, a2 = J[0][p], J[1][p]
            dg[p] = ((0.0, a1, a2), (a1, 2 * a1 * v1, a1 * v2 + v1 * a2), (a2, a1 * v2 + v1 * a2, 2 * a2 * v2))
        return g, dg

    def ergosphere_radius(self) -> Optional[float]:
        """Closed-form ergosphere radius when B is constant."""
        if not self.B.is_constant:
            return None
        return float(np.hypot(self.A, self.B.b0))

    def describe(self):
        B = self.B.b0 if self.B.is_constant else self.B.to_dict()
        return {"family": "bathtub", "A": self.A, "B": B, "r_min": self.r_min}


def draining_bathtub(A: float, B=0.0, r_min: float = 0.05, r_max: float = np.inf, bbox=None) -> BathtubMetric:
    return BathtubMetric(A, B, r_min, r_max, bbox)


class GordonMetric(SpacetimeMetric):
    """Gordon optical metric ``eta + (n^2 - 1) u u^T`` for a moving dielectric."""

    def __init__(self, n_refr, w: Callable, c: float = 1.0, n: int = 3, bbox=None, fd_step=None):
        self.n_refr = n_refr
        self.w = w
        self.c_light = float(c)
        super().__init__(n, "gordon", bbox, fd_step)

    def four_velocity(self, x):
        w = np.asarray(self.w(x), dtype=float)
        beta2 = np.sum(w * w, axis=-1) / self.c_light ** 2
        if np.any(beta2 >= 1.0):
            raise SuperluminalFlow("flow speed |w| >= c at an evaluated point")
        gam = 1.0 / np.sqrt(1.0 - beta2)
        return np.concatenate([gam[..., None], gam[..., None] * w / self.c_light], axis=-1)

    def _g(self, x):
        nr = _const_or_call(self.n_refr, x)
        if np.any(nr < 1.0):
            raise ValueError("refraction index must be >= 1")
        u = self.four_velocity(x)
        return minkowski(self.n) + (nr * nr - 1.0)[..., None, None] * u[..., :, None] * u[..., None, :]

    def describe(self):
        return {"family": "gordon"}


def gordon_metric(n_refr, w: Callable, c: float = 1.0, n: int = 3, bbox=None) -> GordonMetric:
    return GordonMetric(n_refr, w, c, n, bbox)


# ---------------------------------------------------------------------------
# Kerr
# ---------------------------------------------------------------------------

def _oblate_r(R2, z, a):
    """Oblate radius and the auxiliary root ``w = sqrt((R^2-a^2)^2 + 4 a^2 z^2)``."""
    q = R2 - a * a
    w = np.sqrt(q * q + 4.0 * a * a * z * z)
    r2 = 0.5 * (q + w)
    # cancellation guard for q << 0: r^2 = 2 a^2 z^2 / (w - q)
    r2 = np.where(q < 0, 2.0 * a * a * z * z / np.where(w - q > 0, w - q, 1.0), r2)
    return np.sqrt(np.maximum(r2, 0.0)), w


def kerr_r(p, a: float):
    """Oblate radial coordinate from ``(x, y, z)`` or ``(rho, z)``."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 3:
        R2 = np.sum(p * p, axis=-1)
        z = p[..., 2]
    elif p.shape[-1] == 2:
        R2 = p[..., 0] ** 2 + p[..., 1] ** 2
        z = p[..., 1]
    else:
        raise ValueError("expected (x,y,z) or (rho,z)")
    return _oblate_r(R2, z, float(a))[0]


def kerr_factor(r, z, m, a):
    return 2.0 * m * r ** 3 / (r ** 4 + a * a * z * z)


def kerr_horizon_radii(m: float, a: float) -> tuple[float, float]:
    d = np.sqrt(m * m - a * a)
    return m + d, m - d


class _KerrBase(SpacetimeMetric):
    def __init__(self, m, a, n, name, r_floor, bbox):
        if m <= 0 or a < 0 or a > m:
            raise ValueError("require m > 0 and 0 <= a <= m")
        self.m = float(m)
        self.a = float(a)
        self.r_floor = 0.05 * self.m if r_floor is None else float(r_floor)
        self.length_scale = self.m
        super().__init__(n, name, bbox)


class KerrSchildMetric(_KerrBase):
    """Kerr in Kerr-Schild Cartesian coordinates, ``eta + f l l^T``."""

    def __init__(self, m: float = 1.0, a: float = 0.0, r_floor: Optional[float] = None, bbox=None):
        super().__init__(m, a, 3, "kerr", r_floor, bbox)

    def _inside(self, x):
        return kerr_r(x, self.a) >= self.r_floor

    def _parts(self, x):
        a, m = self.a, self.m
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        R2 = X * X + Y * Y + Z * Z
        r, w = _oblate_r(R2, Z, a)
        s = r * r + a * a
        f = kerr_factor(r, Z, m, a)
        l = np.stack([-np.ones_like(r), (r * X + a * Y) / s, (r * Y - a * X) / s, Z / r], axis=-1)
        return X, Y, Z, r, w, s, f, l

    def _g(self, x):
        _, _, _, _, _, _, f, l = self._parts(x)
        return minkowski(3) + f[..., None, None] * l[..., :, None] * l[..., None, :]

    def _grad(self, x):
        a, m = self.a, self.m
        X, Y, Z, r, w, s, f, l = self._parts(x)
        dr = np.stack([X * r / w, Y * r / w, Z * s / (r * w)], axis=-1)  # (..., p)
        Sig = r ** 4 + a * a * Z * Z
        dSig = 4 * r[..., None] ** 3 * dr
        dSig[..., 2] += 2 * a * a * Z
        df = 2 * m * (3 * r[..., None] ** 2 * dr * Sig[..., None] - r[..., None] ** 3 * dSig) / Sig[..., None] ** 2
        dl = np.zeros(x.shape[:-1] + (3, 4))  # (p, a)
        num1 = r * X + a * Y
        num2 = r * Y - a * X
        ds = 2 * r[..., None] * dr
        e = np.eye(3)
        for p in range(3):
            dl[..., p, 1] = (dr[..., p] * X + r * e[p, 0] + a * e[p, 1]) / s - num1 * ds[..., p] / s ** 2
            dl[..., p, 2] = (dr[..., p] * Y + r * e[p, 1] - a * e[p, 0]) / s - num2 * ds[..., p] / s ** 2
            dl[..., p, 3] = e[p, 2] / r - Z * dr[..., p] / r ** 2
        ll = l[..., :, None] * l[..., None, :]
        return (df[..., :, None, None] * ll[..., None, :, :]
                + f[..., None, None, None] * (dl[..., :, :, None] * l[..., None, None, :]
                                              + l[..., None, :, None] * dl[..., :, None, :]))

    def describe(self):
        return {"family": "kerr", "m": self.m, "a": self.a, "r_floor": self.r_floor}


def kerr_kerr_schild(m: float = 1.0, a: float = 0.0, r_floor: Optional[float] = None, bbox=None) -> KerrSchildMetric:
    return KerrSchildMetric(m, a, r_floor, bbox)


def _kerr_cyl_parts(rho, z, m, a):
    r, w = _oblate_r(rho * rho + z * z, z, a)
    s = r * r + a * a
    f = kerr_factor(r, z, m, a)
    mv = np.stack([-np.ones_like(r), r * rho / s, z / r, -a / s], axis=-1)
    dr_rho = rho * r / w
    dr_z = z * s / (r * w)
    Sig = r ** 4 + a * a * z * z
    df_rho = 2 * m * (3 * r * r * dr_rho * Sig - r ** 3 * 4 * r ** 3 * dr_rho) / Sig ** 2
    df_z = 2 * m * (3 * r * r * dr_z * Sig - r ** 3 * (4 * r ** 3 * dr_z + 2 * a * a * z)) / Sig ** 2
    dm = np.zeros(rho.shape + (2, 4))
    for p, d in enumerate((dr_rho, dr_z)):
        drho = 1.0 if p == 0 else 0.0
        dz = 1.0 - drho
        dm[..., p, 1] = (d * rho + r * drho) / s - r * rho * 2 * r * d / s ** 2
        dm[..., p, 2] = dz / r - z * d / r ** 2
        dm[..., p, 3] = a * 2 * r * d / s ** 2
    return f, mv, np.stack([df_rho, df_z], axis=-1), dm


class KerrCylindricalMetric(_KerrBase):
    """Kerr in coordinates ``(rho, z, phi)``: ``xi + f m m^T``, ``xi = diag(1,-1,-1,-1/rho^2)``."""

    def __init__(self, m: float = 1.0, a: float = 0.0, r_floor: Optional[float] = None,
                 rho_floor: float = 1e-6, bbox=None):
        self.rho_floor = float(rho_floor)
        super().__init__(m, a, 3, "kerr_cyl", r_floor, bbox)

    def _inside(self, x):
        return (x[..., 0] > self.rho_floor) & (kerr_r(x[..., :2], self.a) >= self.r_floor)

    def _g(self, x):
        rho, z = x[..., 0], x[..., 1]
        f, mv, _, _ = _kerr_cyl_parts(rho, z, self.m, self.a)
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = -1.0
        g[..., 2, 2] = -1.0
        g[..., 3, 3] = -1.0 / rho ** 2
        return g + f[..., None, None] * mv[..., :, None] * mv[..., None, :]

    def _grad(self, x):
        rho, z = x[..., 0], x[..., 1]
        f, mv, df, dm = _kerr_cyl_parts(rho, z, self.m, self.a)
        out = np.zeros(x.shape[:-1] + (3, 4, 4))
        mm = mv[..., :, None] * mv[..., None, :]
        for p in range(2):
            out[..., p, :, :] = (df[..., p, None, None] * mm
                                 + f[..., None, None] * (dm[..., p, :, None] * mv[..., None, :]
                                                         + mv[..., :, None] * dm[..., p, None, :]))
        out[..., 0, 3, 3] += 2.0 / rho ** 3
        return out

    def meridional(self) -> "KerrMeridionalMetric":
        return KerrMeridionalMetric(self.m, self.a, self.r_floor)

    def describe(self):
        return {"family": "kerr_cyl", "m": self.m, "a": self.a, "r_floor": self.r_floor,
                "rho_floor": self.rho_floor}


def kerr_cylindrical(m: float = 1.0, a: float = 0.0, r_floor: Optional[float] = None,
                     rho_floor: float = 1e-6, bbox=None) -> KerrCylindricalMetric:
    return KerrCylindricalMetric(m, a, r_floor, rho_floor, bbox)


class KerrMeridionalMetric(_KerrBase):
    """The ``(t, rho, z)`` block of the cylindrical Kerr tensor, as a 2D metric.

    Evaluated at signed ``rho`` the block is even in ``rho`` up to the sign of
    the ``t rho`` and ``rho z`` entries, which is the mirror image of the
    half-plane so the full meridional plane can be used directly.
    """

    def __init__(self, m: float = 1.0, a: float = 0.0, r_floor: Optional[float] = None, bbox=None):
        super().__init__(m, a, 2, "kerr_meridional", r_floor, bbox)

    def _inside(self, x):
        return kerr_r(x, self.a) >= self.r_floor

    def _g(self, x):
        f, mv, _, _ = _kerr_cyl_parts(x[..., 0], x[..., 1], self.m, self.a)
        mv = mv[..., :3]
        return np.diag([1.0, -1.0, -1.0]) + f[..., None, None] * mv[..., :, None] * mv[..., None, :]

    def _grad(self, x):
        f, mv, df, dm = _kerr_cyl_parts(x[..., 0], x[..., 1], self.m, self.a)
        mv = mv[..., :3]
        dm = dm[..., :3]
        mm = mv[..., :, None] * mv[..., None, :]
        return (df[..., :, None, None] * mm[..., None, :, :]
                + f[..., None, None, None] * (dm[..., :, :, None] * mv[..., None, None, :]
                                              + mv[..., None, :, None] * dm[..., :, None, :]))

    def flow_vector(self, x):
        f, mv, _, _ = _kerr_cyl_parts(x[..., 0], x[..., 1], self.m, self.a)
        return np.sqrt(f)[..., None] * mv[..., :3]

    def flow_vector_jac(self, x):
        f, mv, df, dm = _kerr_cyl_parts(x[..., 0], x[..., 1], self.m, self.a)
        sf = np.sqrt(f)
        return (0.5 / sf)[..., None, None] * df[..., :, None] * mv[..., None, :3] + sf[..., None, None] * dm[..., :3]

    def xi(self) -> Array:
        return np.diag([1.0, -1.0, -1.0])

    def describe(self):
        return {"family": "kerr_meridional", "m": self.m, "a": self.a, "r_floor": self.r_floor}


class PerturbedFlowMetric(SpacetimeMetric):
    """Velocity-form metric ``xi + V_eps V_eps^T`` with ``V_eps = V + eps (0, dv)``.

    ``base`` must expose ``flow_vector``, ``flow_vector_jac`` and ``xi``
    (unit-medium acoustic metrics and the meridional Kerr block do).
    """

    def __init__(self, base: SpacetimeMetric, delta_v: Callable, eps: float,
                 delta_jac: Optional[Callable] = None):
        self.base = base
        self.delta_v = delta_v
        self.delta_jac = delta_jac
        self.eps = float(eps)
        self.length_scale = base.length_scale
        super().__init__(base.n, f"perturbation({base.name})", base.bbox, base.fd_step)

    def _inside(self, x):
        return self.base.inside(x)

    def _V(self, x):
        V = self.base.flow_vector(x).copy()
        V[..., 1:] += self.eps * np.asarray(self.delta_v(x), dtype=float)
        return V

    def flow_vector(self, x):
        return self._V(x)

    def xi(self):
        return self.base.xi()

    def _g(self, x):
        V = self._V(x)
        return self.base.xi() + V[..., :, None] * V[..., None, :]

    def flow_vector_jac(self, x):
        dV = np.array(self.base.flow_vector_jac(x), dtype=float)
        if self.delta_jac is not None:
            dd = np.asarray(self.delta_jac(x), dtype=float)  # (..., i, p)
            dV[..., :, 1:] += self.eps * np.swapaxes(dd, -1, -2)
        else:
            h = self.fd_step
            for p in range(self.n):
                e = np.zeros(self.n)
                e[p] = h
                dV[..., p, 1:] += self.eps * (np.asarray(self.delta_v(x + e)) - np.asarray(self.delta_v(x - e))) / (2 * h)
        return dV

    @property
    def deriv_mode(self) -> str:
        return "analytic" if (self.base.deriv_mode == "analytic" and self.delta_jac is not None) else "central"

    def _grad(self, x):
        V = self._V(x)
        dV = self.flow_vector_jac(x)
        return dV[..., :, :, None] * V[..., None, None, :] + V[..., None, :, None] * dV[..., :, None, :]

    def describe(self):
        return {"family": "perturbation", "base": self.base.describe(), "eps": self.eps}


@dataclass
class PerturbationFamily:
    base: SpacetimeMetric
    delta_v: Callable
    eps_max: float
    delta_jac: Optional[Callable] = None

    def __call__(self, eps: float) -> SpacetimeMetric:
        if not (0.0 <= eps <= self.eps_max):
            raise ValueError(f"eps={eps} outside [0, {self.eps_max}]")
        if eps == 0.0:
            return self.base
        return PerturbedFlowMetric(self.base, self.delta_v, eps, self.delta_jac)


def perturbation_family(base: SpacetimeMetric, delta_v: Callable, eps_max: float,
                        delta_jac: Optional[Callable] = None) -> PerturbationFamily:
    if isinstance(base, AcousticMetric) and not base.unit_medium:
        raise ValueError("perturbation family requires the unit-medium normalisation rho = c = 1")
    if not hasattr(base, "flow_vector"):
        raise ValueError(f"{base.name} has no velocity form")
    return PerturbationFamily(base, delta_v, float(eps_max), delta_jac)


def tangential_delta(B: FourierSeries | float):
    """Perturbation field ``B(theta) theta_hat / r`` and its Jacobian."""
    aux = BathtubMetric(0.0, B)
    return aux._vel, aux._jac


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSample:
    x: Array
    g_up: Array
    g_down: Array
    det_down: float
    grad_up: Array


def eval_metric(metric: SpacetimeMetric, x) -> MetricSample:
    x = np.asarray(x, dtype=float)
    g = metric.g_up(x)
    det_up = float(np.linalg.det(g))
    if not np.isfinite(det_up) or abs(det_up) <= DET_TOL:
        raise DegenerateMetric(f"{metric.name}: |det g_up| = {abs(det_up):.3e} at x={x.tolist()}")
    gd = np.linalg.inv(g)
    gd = 0.5 * (gd + gd.T)
    return MetricSample(x=x, g_up=g, g_down=gd, det_down=1.0 / det_up, grad_up=metric.grad_up(x))


def signature_ok(g: Array) -> Array:
    """True where the symmetric matrix has exactly one positive eigenvalue and no zero one."""
    ev = np.linalg.eigvalsh(g)
    scale = np.max(np.abs(ev), axis=-1, keepdims=True)
    pos = np.sum(ev > 1e-13 * scale, axis=-1)
    neg = np.sum(ev < -1e-13 * scale, axis=-1)
    return (pos == 1) & (neg == g.shape[-1] - 1)
