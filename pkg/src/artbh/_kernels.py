"""Compiled stencil kernels for the wave simulator.

State is the pair (u, pi) with pi = a00 u_t + a0k d_k u; the semi-discrete
system is

    u_t  = pi / a00 - beta . D u
    pi_t = D . F,       F = P D u - beta pi

where every spatial derivative is the same centred difference ``D``.  Using a
single difference operator for the flow terms and the principal part gives
the discrete dispersion relation omega = (beta.s +- |s|_P) / h with
s = sin(k h): the continuum relation with k replaced by sin(k h)/h.  Both
characteristic families therefore keep the sign of their continuum group
velocity for |k h| < pi/2, so discrete horizons sit where the continuum ones
do; the short-wave doublers (|k h| > pi/2) are removed by optional
Kreiss-Oliger dissipation.

Leapfrog overwrites level n-1 with level n+1 in place.  The sponge is treated
semi-implicitly through fa = (1 - sigma dt)/(1 + sigma dt), fb = 1/(1 + sigma dt),
and the dissipation acts on the lagged level (three saved rows keep the
in-place update exact).  Two layers of boundary nodes stay at zero.
"""
import numpy as np
from numba import njit


@njit(cache=True, fastmath=True, boundscheck=False)
def _save_row(ring, src, i):
    r = ring[i % 3]
    for j in range(src.shape[0]):
        r[j] = src[j]


@njit(cache=True, fastmath=True, boundscheck=False)
def _add_ko(acc, ring, nxt1, nxt2, i, kc, c4, c12):
    a2 = ring[(i - 2) % 3]
    a1 = ring[(i - 1) % 3]
    a0 = ring[i % 3]
    for j in range(2, acc.shape[0] - 2):
        acc[j] += kc * (nxt2[j] + a2[j] + a0[j + 2] + a0[j - 2]
                        - c4 * (nxt1[j] + a1[j] + a0[j + 1] + a0[j - 1]) + c12 * a0[j])


@njit(cache=True, fastmath=True, boundscheck=False)
def step_unit(u0, p0, u1, p1, bx, by, fa, fb, cst, ring_u, ring_p):
    """Leapfrog step for a00 = 1, P = I.  (u0, p0) hold level n-1 on entry and n+1 on exit.

    ``cst`` = (1/(2h), 1/(4h^2), 2 dt, -ko/(16h), 4, 12, tiny, 0) in the storage dtype,
    so that no literal promotes single-precision arithmetic.  Values below
    ``tiny`` are flushed to zero: the far precursor tails of a pulse otherwise
    decay into subnormals, which are an order of magnitude slower.
    """
    nx, ny = u1.shape
    hh, q, two_dt, kc, c4, c12, tiny, zero = cst[0], cst[1], cst[2], cst[3], cst[4], cst[5], cst[6], cst[7]
    use_ko = kc != 0
    # local row buffers: the compiler can then rule out aliasing and vectorise
    du = np.zeros(ny, u0.dtype)
    dp = np.zeros(ny, u0.dtype)
    for i in range(2, nx - 2):
        um2 = u1[i - 2]
        um = u1[i - 1]
        uc = u1[i]
        up = u1[i + 1]
        up2 = u1[i + 2]
        pm = p1[i - 1]
        pc = p1[i]
        pp = p1[i + 1]
        bxm = bx[i - 1]
        bxc = bx[i]
        bxp = bx[i + 1]
        byc = by[i]
        for j in range(2, ny - 2):
            du[j] = pc[j] - (bxc[j] * (up[j] - um[j]) + byc[j] * (uc[j + 1] - uc[j - 1])) * hh
            div = ((bxp[j] * pp[j] - bxm[j] * pm[j]) + (byc[j + 1] * pc[j + 1] - byc[j - 1] * pc[j - 1])) * hh
            dp[j] = (up2[j] + um2[j] + uc[j + 2] + uc[j - 2] - c4 * uc[j]) * q - div
        u0r = u0[i]
        p0r = p0[i]
        if use_ko:
            _save_row(ring_u, u0r, i)
            _save_row(ring_p, p0r, i)
            _add_ko(du, ring_u, u0[i + 1], u0[i + 2], i, kc, c4, c12)
            _add_ko(dp, ring_p, p0[i + 1], p0[i + 2], i, kc, c4, c12)
        fac = fa[i]
        fbc = fb[i]
        for j in range(2, ny - 2):
            a = u0r[j] * fac[j] + fbc[j] * (two_dt * du[j])
            b = p0r[j] * fac[j] + fbc[j] * (two_dt * dp[j])
            u0r[j] = a if abs(a) > tiny else zero
            p0r[j] = b if abs(b) > tiny else zero


@njit(cache=True, fastmath=True, boundscheck=False)
def fluxes(u, p, bx, by, pxx, pyy, pxy, hh, fx, fy):
    """F = P D u - beta pi at every node not on the outer ring (``hh`` = 1/(2h))."""
    nx, ny = u.shape
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            ux = (u[i + 1, j] - u[i - 1, j]) * hh
            uy = (u[i, j + 1] - u[i, j - 1]) * hh
            fx[i, j] = pxx[i, j] * ux + pxy[i, j] * uy - bx[i, j] * p[i, j]
            fy[i, j] = pxy[i, j] * ux + pyy[i, j] * uy - by[i, j] * p[i, j]


@njit(cache=True, fastmath=True, boundscheck=False)
def step_general(u0, p0, u1, p1, ia00, bx, by, pxx, pyy, pxy, fa, fb, cst, ring_u, ring_p, fx, fy):
    """Leapfrog step for general coefficients (see module docstring and ``step_unit``)."""
    nx, ny = u1.shape
    hh, two_dt, kc, c4, c12, tiny, zero = cst[0], cst[2], cst[3], cst[4], cst[5], cst[6], cst[7]
    use_ko = kc != 0
    du = np.zeros(ny, u0.dtype)
    dp = np.zeros(ny, u0.dtype)
    fluxes(u1, p1, bx, by, pxx, pyy, pxy, hh, fx, fy)
    for i in range(2, nx - 2):
        uc = u1[i]
        for j in range(2, ny - 2):
            du[j] = ia00[i, j] * p1[i, j] - (bx[i, j] * (u1[i + 1, j] - u1[i - 1, j])
                                             + by[i, j] * (uc[j + 1] - uc[j - 1])) * hh
            dp[j] = (fx[i + 1, j] - fx[i - 1, j] + fy[i, j + 1] - fy[i, j - 1]) * hh
        u0r = u0[i]
        p0r = p0[i]
        if use_ko:
            _save_row(ring_u, u0r, i)
            _save_row(ring_p, p0r, i)
            _add_ko(du, ring_u, u0[i + 1], u0[i + 2], i, kc, c4, c12)
            _add_ko(dp, ring_p, p0[i + 1], p0[i + 2], i, kc, c4, c12)
        fac = fa[i]
        fbc = fb[i]
        for j in range(2, ny - 2):
            a = u0r[j] * fac[j] + fbc[j] * (two_dt * du[j])
            b = p0r[j] * fac[j] + fbc[j] * (two_dt * dp[j])
            u0r[j] = a if abs(a) > tiny else zero
            p0r[j] = b if abs(b) > tiny else zero


@njit(cache=True, fastmath=True, boundscheck=False)
def rhs_general(u, p, ia00, bx, by, pxx, pyy, pxy, inv_h, du, dp, fx, fy):
    """Semi-discrete right-hand side (no sponge, no dissipation); the two outer node layers get zero."""
    nx, ny = u.shape
    hh = 0.5 * inv_h
    du[:, :] = 0.0
    dp[:, :] = 0.0
    fluxes(u, p, bx, by, pxx, pyy, pxy, hh, fx, fy)
    for i in range(2, nx - 2):
        for j in range(2, ny - 2):
            du[i, j] = ia00[i, j] * p[i, j] - (bx[i, j] * (u[i + 1, j] - u[i - 1, j])
                                               + by[i, j] * (u[i, j + 1] - u[i, j - 1])) * hh
            dp[i, j] = (fx[i + 1, j] - fx[i - 1, j] + fy[i, j + 1] - fy[i, j - 1]) * hh


@njit(cache=True, fastmath=True, boundscheck=False)
def ut_from_state(u, p, ia00, bx, by, inv_h, out):
    nx, ny = u.shape
    hh = 0.5 * inv_h
    out[:, :] = 0.0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            out[i, j] = ia00[i, j] * p[i, j] - (bx[i, j] * (u[i + 1, j] - u[i - 1, j])
                                                + by[i, j] * (u[i, j + 1] - u[i, j - 1])) * hh


@njit(cache=True, boundscheck=False)
def region_energies(u, p, ia00, bx, by, label, inv_h, h2, out):
    """Per-region sums in a fixed order (no fastmath, so the result does not depend on vectorisation).

    ``label`` holds 0 for nodes outside every region and k >= 1 for region k;
    ``out[k]`` receives (sum |D u|^2 h^2, sum u^2 h^2, sum u_t^2 h^2, max |u|)
    over the interior nodes of region k, with ``D`` the centred difference
    used by the scheme.
    """
    nx, ny = u.shape
    hh = 0.5 * inv_h
    out[:, :] = 0.0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            k = label[i, j]
            if k == 0:
                continue
            v = np.float64(u[i, j])
            ux = (np.float64(u[i + 1, j]) - np.float64(u[i - 1, j])) * hh
            uy = (np.float64(u[i, j + 1]) - np.float64(u[i, j - 1])) * hh
            out[k, 0] += (ux * ux + uy * uy) * h2
            out[k, 1] += v * v * h2
            ut = np.float64(ia00[i, j]) * np.float64(p[i, j]) - (np.float64(bx[i, j]) * ux + np.float64(by[i, j]) * uy)
            out[k, 2] += ut * ut * h2
            a = abs(v)
            if a > out[k, 3]:
                out[k, 3] = a
