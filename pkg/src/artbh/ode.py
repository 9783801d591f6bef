"""Dormand-Prince 5(4) integrator with PI step control.

Written in-house rather than delegated to ``scipy.integrate.solve_ivp``
because the callers need behaviour that scipy does not expose: trial stages
that leave the metric domain must shrink the step instead of aborting, the
reason for stopping is reported, fixed-step operation is available for
convergence studies, and events are located with a full Runge-Kutta step of
the exact length rather than an interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ArtBHError

# Butcher tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A = [np.asarray(r) for r in A]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B5 - B4

SAFETY = 0.9
ALPHA = 0.7 / 5
BETA = 0.4 / 5


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray
    status: str  # done | event | domain | underflow | max_steps
    message: str = ""
    t_event: Optional[float] = None
    y_event: Optional[np.ndarray] = None
    nfev: int = 0
    naccept: int = 0
    nreject: int = 0


class _StageFailure(Exception):
    pass


def _eval(f, t, y):
    try:
        k = np.asarray(f(t, y), dtype=float)
    except (ArtBHError, FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        raise _StageFailure(str(exc)) from exc
    tot = float(np.abs(k).sum())
    if not (tot < 1e150):  # catches NaN and inf as well
        raise _StageFailure("non-finite right-hand side")
    return k


def dp_step(f, t, y, h, k1=None):
    """One Dormand-Prince step; returns ``(y5, error_vector, k7)``."""
    K = np.empty((7, y.size))
    K[0] = _eval(f, t, y) if k1 is None else k1
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, 7):
            yi = y + h * (_A[i] @ K[:i])
            K[i] = _eval(f, t + C[i] * h, yi)
        y5 = y + h * (B5 @ K)
        err = h * (E @ K)
    return y5, err, K[6]


def dopri5(f: Callable, t0: float, y0, t_end: float, rtol: float = 1e-8, atol: float = 1e-10,
           h0: Optional[float] = None, h_max: float = np.inf, fixed_h: Optional[float] = None,
           max_steps: int = 200000, event: Optional[Callable] = None, event_direction: int = 0,
           event_tol: float = 1e-13, record: bool = True,
           stop_check: Optional[Callable] = None) -> OdeResult:
    """Integrate ``y' = f(t, y)`` from ``t0`` towards ``t_end``.

    If ``event`` is given, integration stops at the first zero of
    ``event(t, y)`` crossed in ``event_direction`` (+1 rising, -1 falling,
    0 either).  With ``fixed_h`` no error control is applied.  ``stop_check``
    is called after every accepted step and ends the run with status
    ``stopped`` when it returns a non-empty reason string.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    span = float(t_end) - t
    direction = 1.0 if span >= 0 else -1.0
    if span == 0:
        return OdeResult(np.array([t]), y[None, :], "done")
    h_min = 1e-12 * abs(span)
    ts, ys = [t], [y.copy()]
    nfev = nacc = nrej = 0
    try:
        k1 = _eval(f, t, y)
    except _StageFailure as exc:
        return OdeResult(np.array(ts), np.array(ys), "domain", str(exc))
    nfev += 1
    if fixed_h is not None:
        h = abs(fixed_h)
    elif h0 is not None:
        h = abs(h0)
    else:
        sc = atol + rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / sc) ** 2))
        d1 = np.sqrt(np.mean((k1 / sc) ** 2))
        h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
        h = min(h, abs(span) * 0.1)
    h = min(h, h_max)
    err_prev = 1.0
    g_prev = event(t, y) if event is not None else None
    fail_reason = ""
    for _ in range(max_steps):
        if direction * (t_end - t) <= 0:
            break
        last = abs(t_end - t) <= h * (1 + 1e-12)
        hs = direction * (abs(t_end - t) if last else h)
        try:
            y_new, err_vec, k7 = dp_step(f, t, y, hs, k1)
            nfev += 6
            ok_stage = True
        except _StageFailure as exc:
            ok_stage = False
            fail_reason = str(exc)
        if not ok_stage:
            nrej += 1
            h = 0.25 * abs(hs)
            if h < h_min:
                return OdeResult(np.array(ts), np.array(ys), "domain", fail_reason, nfev=nfev, naccept=nacc, nreject=nrej)
            continue
        if fixed_h is None:
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((err_vec / sc) ** 2)))
            if err > 1.0:
                nrej += 1
                h = abs(hs) * max(0.2, SAFETY * err ** (-0.2))
                if h < h_min:
                    return OdeResult(np.array(ts), np.array(ys), "underflow",
                                     f"step size below {h_min:.3e} at t={t:.6g}", nfev=nfev, naccept=nacc, nreject=nrej)
                continue
        t_new = t + hs
        if event is not None:
            g_new = event(t_new, y_new)
            crossed = (g_prev < 0 <= g_new) if event_direction > 0 else (
                (g_prev > 0 >= g_new) if event_direction < 0 else (g_prev * g_new < 0 or (g_new == 0 and g_prev != 0)))
            if crossed:
                tau = _locate(f, event, t, y, k1, hs, event_tol)
                ye, _, _ = dp_step(f, t, y, tau, k1)
                if record:
                    ts.append(t + tau)
                    ys.append(ye)
                return OdeResult(np.array(ts), np.array(ys), "event", "", t + tau, ye, nfev, nacc + 1, nrej)
            g_prev = g_new
        t, y, k1 = t_new, y_new, k7
        nacc += 1
        if record:
            ts.append(t)
            ys.append(y.copy())
        if stop_check is not None:
            why = stop_check(t, y)
            if why:
                if not record:
                    ts.append(t)
                    ys.append(y.copy())
                return OdeResult(np.array(ts), np.array(ys), "stopped", why, nfev=nfev, naccept=nacc, nreject=nrej)
        if fixed_h is None:
            err = max(err, 1e-10)
            fac = SAFETY * err ** (-ALPHA) * err_prev ** BETA
            h = abs(hs) * min(5.0, max(0.2, fac))
            h = min(h, h_max)
            err_prev = err
    else:
        return OdeResult(np.array(ts), np.array(ys), "max_steps", f"exceeded {max_steps} steps",
                         nfev=nfev, naccept=nacc, nreject=nrej)
    if not record:
        ts.append(t)
        ys.append(y.copy())
    return OdeResult(np.array(ts), np.array(ys), "done", "", nfev=nfev, naccept=nacc, nreject=nrej)


def _locate(f, event, t, y, k1, hs, tol):
    """Step length ``tau`` in ``(0, hs]`` at which the event function vanishes."""
    def g(tau):
        if tau == 0.0:
            return event(t, y)
        yt, _, _ = dp_step(f, t, y, tau, k1)
        return event(t + tau, yt)

    a, b = 0.0, hs
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return 0.0
    if gb == 0.0 or ga * gb > 0:
        return hs
    return brentq(g, a, b, xtol=tol * max(1.0, abs(t)), rtol=4 * np.finfo(float).eps)
