"""Closed curves in the plane and zero-set extraction by marching squares."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.distance import directed_hausdorff

from .errors import AmbiguousTopology, NoZeroSet

Field = Callable[[np.ndarray], np.ndarray]


@dataclass
class ClosedCurve:
    """Counterclockwise closed polyline (last vertex joins the first) with outward unit normals."""

    vertices: np.ndarray
    normals: np.ndarray
    h_curve: float = np.inf
    label: str = ""

    def __len__(self):
        return len(self.vertices)

    @property
    def orientation(self) -> str:
        return "ccw" if signed_area(self.vertices) > 0 else "cw"

    def area(self) -> float:
        return abs(signed_area(self.vertices))

    def perimeter(self) -> float:
        return float(np.sum(self.edge_lengths()))

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.vertices, -1, axis=0) - self.vertices, axis=1)

    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cr = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        A = 0.5 * cr.sum()
        return np.array([((v[:, 0] + w[:, 0]) * cr).sum(), ((v[:, 1] + w[:, 1]) * cr).sum()]) / (6 * A)

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices + np.roll(self.vertices, -1, axis=0))

    def contains(self, p) -> np.ndarray:
        """Even-odd point-in-polygon test, vectorised over ``p``."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        x, y = p[:, 0:1], p[:, 1:2]
        cond = (v[None, :, 1] > y) != (w[None, :, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = v[None, :, 0] + (y - v[None, :, 1]) * (w[None, :, 0] - v[None, :, 0]) / (w[None, :, 1] - v[None, :, 1])
        inside = np.sum(cond & (x < xint), axis=1) % 2 == 1
        return inside

    def is_simple(self) -> bool:
        return polyline_is_simple(self.vertices)


def signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def polyline_is_simple(v: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the closed polyline intersect."""
    from shapely.geometry import LinearRing

    return bool(LinearRing(v).is_simple)


def outward_normals_from_tangents(t: np.ndarray) -> np.ndarray:
    """For a counterclockwise curve, rotate tangents clockwise by 90 degrees."""
    n = np.stack([t[:, 1], -t[:, 0]], axis=1)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


# ---------------------------------------------------------------------------
# marching squares
# ---------------------------------------------------------------------------

@dataclass
class ContourResult:
    curves: list
    open_chains: list = field(default_factory=list)
    raw: list = field(default_factory=list)  # polished polylines before resampling


def _bisect_edges(fn: Field, p0, p1, f0, f1, tol, max_iter=200):
    """Vectorised bracketing refinement of sign changes on segments ``p0 -> p1``.

    Starts from the linear-interpolation estimate and continues with the
    Illinois variant of regula falsi, falling back to bisection steps so every
    iteration shrinks the bracket.
    """
    a = np.zeros(len(p0))
    b = np.ones(len(p0))
    fa = f0.copy()
    fb = f1.copy()
    t = fa / (fa - fb)
    x = p0 + t[:, None] * (p1 - p0)
    fx = fn(x)
    active = np.abs(fx) >= tol
    side = np.zeros(len(p0))
    for it in range(max_iter):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        left = np.sign(fx[idx]) == np.sign(fa[idx])
        ia, ib = idx[left], idx[~left]
        a[ia], fa[ia] = t[ia], fx[ia]
        b[ib], fb[ib] = t[ib], fx[ib]
        # Illinois weighting when the same end is kept twice
        fb[ia] = np.where(side[ia] == 1, 0.5 * fb[ia], fb[ia])
        fa[ib] = np.where(side[ib] == -1, 0.5 * fa[ib], fa[ib])
        side[ia] = 1
        side[ib] = -1
        tn = a[idx] - fa[idx] * (b[idx] - a[idx]) / (fb[idx] - fa[idx])
        if it % 4 == 3:
            tn = 0.5 * (a[idx] + b[idx])
        bad = ~np.isfinite(tn) | (tn <= a[idx]) | (tn >= b[idx])
        tn[bad] = 0.5 * (a[idx] + b[idx])[bad]
        t[idx] = tn
        x[idx] = p0[idx] + tn[:, None] * (p1[idx] - p0[idx])
        fx[idx] = fn(x[idx])
        active[idx] = (np.abs(fx[idx]) >= tol) & ((b[idx] - a[idx]) > 1e-15)
    return x, fx


def _eval_grid(fn: Field, xs, ys):
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.asarray(fn(np.stack([X, Y], axis=-1)), dtype=float)


def marching_squares(fn: Field, bbox, h: float, tol: float = 1e-10, F: Optional[np.ndarray] = None):
    """Zero set of ``fn`` on a uniform grid.

    Returns ``(closed, open_)`` lists of polished polylines (arrays of shape
    ``(k, 2)``).  Closed chains are oriented counterclockwise.
    """
    (x0, y0), (x1, y1) = np.asarray(bbox[0], float), np.asarray(bbox[1], float)
    nx = int(np.floor((x1 - x0) / h + 1e-9)) + 1
    ny = int(np.floor((y1 - y0) / h + 1e-9)) + 1
    xs = x0 + h * np.arange(nx)
    ys = y0 + h * np.arange(ny)
    if F is None:
        F = _eval_grid(fn, xs, ys)
    fin = np.isfinite(F)
    pos = F > 0

    # crossings on horizontal edges (i,j)-(i+1,j) and vertical edges (i,j)-(i,j+1)
    hcross = fin[:-1, :] & fin[1:, :] & (pos[:-1, :] != pos[1:, :])
    vcross = fin[:, :-1] & fin[:, 1:] & (pos[:, :-1] != pos[:, 1:])
    if not (hcross.any() or vcross.any()):
        raise NoZeroSet("field has no sign change on the grid")

    # crossing point ids
    hid = -np.ones(hcross.shape, dtype=np.int64)
    vid = -np.ones(vcross.shape, dtype=np.int64)
    hi, hj = np.nonzero(hcross)
    vi, vj = np.nonzero(vcross)
    nh = len(hi)
    hid[hi, hj] = np.arange(nh)
    vid[vi, vj] = nh + np.arange(len(vi))
    p0 = np.concatenate([np.stack([xs[hi], ys[hj]], 1), np.stack([xs[vi], ys[vj]], 1)])
    p1 = np.concatenate([np.stack([xs[hi + 1], ys[hj]], 1), np.stack([xs[vi], ys[vj + 1]], 1)])
    f0 = np.concatenate([F[hi, hj], F[vi, vj]])
    f1 = np.concatenate([F[hi + 1, hj], F[vi, vj + 1]])
    pts, _ = _bisect_edges(fn, p0, p1, f0, f1, tol)

    # cells: corners c0=(i,j) c1=(i+1,j) c2=(i+1,j+1) c3=(i,j+1)
    cfin = fin[:-1, :-1] & fin[1:, :-1] & fin[1:, 1:] & fin[:-1, 1:]
    e0 = hid[:, :-1]
    e1 = vid[1:, :]
    e2 = hid[:, 1:]
    e3 = vid[:-1, :]
    E = np.stack([e0, e1, e2, e3], axis=-1)
    ncross = np.sum(E >= 0, axis=-1)
    segs = []
    two = cfin & (ncross == 2)
    ii, jj = np.nonzero(two)
    Ec = E[ii, jj]
    for row in Ec:
        k = row[row >= 0]
        segs.append((k[0], k[1]))
    four = cfin & (ncross == 4)
    si, sj = np.nonzero(four)
    if len(si):
        centers = np.stack([xs[si] + 0.5 * h, ys[sj] + 0.5 * h], axis=1)
        fc = np.asarray(fn(centers), dtype=float)
        scale = np.max(np.abs(F[np.isfinite(F)]))
        if np.any(~np.isfinite(fc)) or np.any(np.abs(fc) <= 1e-12 * scale):
            raise AmbiguousTopology(f"saddle cell near {centers[0].tolist()} unresolved at h={h}; refine the grid")
        for (i, j), fcv in zip(zip(si, sj), fc):
            a0, a1, a2, a3 = E[i, j]
            if (fcv > 0) == pos[i, j]:
                segs += [(a0, a1), (a2, a3)]
            else:
                segs += [(a3, a0), (a1, a2)]

    closed, open_ = _chain(segs, len(pts))
    closed = [_dedupe(pts[c], h, True) for c in closed]
    closed = [c if signed_area(c) > 0 else c[::-1].copy() for c in closed]
    open_ = [_dedupe(pts[c], h, False) for c in open_]
    return closed, open_


def _dedupe(v, h, closed):
    """Drop repeated vertices (a zero exactly on a grid node is found by two edges)."""
    nxt = np.roll(v, -1, axis=0) if closed else np.vstack([v[1:], v[-1:] + h])
    keep = np.linalg.norm(nxt - v, axis=1) > 1e-12 * h
    return v[keep] if keep.sum() >= 3 or not closed else v


def _chain(segs, npts):
    adj = [[] for _ in range(npts)]
    for s, (a, b) in enumerate(segs):
        adj[a].append(s)
        adj[b].append(s)
    used = np.zeros(len(segs), dtype=bool)
    closed, open_ = [], []

    def walk(start_pt, first_seg):
        chain = [start_pt]
        s = first_seg
        p = start_pt
        while s is not None and not used[s]:
            used[s] = True
            a, b = segs[s]
            p = b if a == p else a
            chain.append(p)
            nxt = [t for t in adj[p] if not used[t]]
            s = nxt[0] if nxt else None
        return chain

    # open chains start at points of degree one
    for p in range(npts):
        if len(adj[p]) == 1 and not used[adj[p][0]]:
            open_.append(np.array(walk(p, adj[p][0])))
    for s in range(len(segs)):
        if used[s]:
            continue
        chain = walk(segs[s][0], s)
        if chain[0] == chain[-1]:
            closed.append(np.array(chain[:-1]))
        else:
            open_.append(np.array(chain))
    return closed, open_


def _grad_fd(fn: Field, x, eps):
    ex = np.array([eps, 0.0])
    ey = np.array([0.0, eps])
    gx = (fn(x + ex) - fn(x - ex)) / (2 * eps)
    gy = (fn(x + ey) - fn(x - ey)) / (2 * eps)
    return np.stack([gx, gy], axis=-1)


def project_to_zero_set(fn: Field, x, tol=1e-10, eps=1e-7, max_iter=20):
    """Newton projection ``x <- x - F grad F / |grad F|^2`` point by point."""
    x = np.array(x, dtype=float)
    for _ in range(max_iter):
        f = np.asarray(fn(x), dtype=float)
        act = np.isfinite(f) & (np.abs(f) >= tol)
        if not act.any():
            break
        g = _grad_fd(fn, x[act], eps)
        g2 = np.sum(g * g, axis=1)
        ok = np.isfinite(g2) & (g2 > 0)
        step = np.zeros_like(g)
        step[ok] = (f[act][ok] / g2[ok])[:, None] * g[ok]
        # do not wander further than a small fraction of the sampling
        x[act] = x[act] - step
    return x


def resample_closed(fn: Optional[Field], poly: np.ndarray, h_curve: float, tol=1e-10, label="") -> ClosedCurve:
    """Uniform resampling of a closed polyline via a periodic cubic spline.

    When ``fn`` is given the samples are projected back onto its zero set
    and the normals are taken from its gradient, oriented to agree with the
    outward side of the spline.
    """
    v = np.asarray(poly, dtype=float)
    seg = np.linalg.norm(np.diff(np.vstack([v, v[:1]]), axis=0), axis=1)
    keep = seg > 1e-14
    v = v[keep]
    seg = seg[keep]
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    sp = CubicSpline(s, np.vstack([v, v[:1]]), bc_type="periodic")
    N = max(8, int(np.ceil(1.02 * L / h_curve)))
    for _ in range(6):
        t = np.linspace(0.0, L, N, endpoint=False)
        pts = sp(t)
        tan = sp(t, 1)
        if fn is not None:
            new = project_to_zero_set(fn, pts, tol)
            good = np.all(np.isfinite(new), axis=1) & (np.linalg.norm(new - pts, axis=1) < h_curve)
            pts = np.where(good[:, None], new, pts)
        d = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if d.max() <= h_curve:
            break
        N = int(np.ceil(N * d.max() / h_curve * 1.02))
    nrm = outward_normals_from_tangents(tan)
    if fn is not None:
        # the curve is a level set, so the field gradient gives the normal
        # direction to far better accuracy than the spline tangent
        g = _grad_fd(fn, pts, 1e-6 * max(1.0, float(np.abs(pts).max())))
        gn = np.linalg.norm(g, axis=1)
        ok = np.isfinite(gn) & (gn > 0)
        gu = g[ok] / gn[ok, None]
        gu *= np.sign(np.sum(gu * nrm[ok], axis=1))[:, None]
        nrm[ok] = gu
    if signed_area(pts) < 0:
        pts = pts[::-1].copy()
        nrm = -nrm[::-1]
    return ClosedCurve(pts, nrm, h_curve, label)


def extract_contour(fn: Field, bbox, h: float, tol: float = 1e-10, resample: bool = True,
                    label: str = "") -> ContourResult:
    """Closed components of ``{fn = 0}`` inside ``bbox`` at grid resolution ``h``.

    Chains that end on the bounding box or on an undefined region of the field
    are returned in ``open_chains`` and left out of ``curves``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    closed, open_ = marching_squares(fn, bbox, h, tol)
    if resample:
        curves = [resample_closed(fn, c, 0.5 * h, tol, label) for c in closed]
    else:
        curves = [ClosedCurve(c, _poly_normals(c), h, label) for c in closed]
    return ContourResult(curves, open_, closed)


def _poly_normals(v):
    t = np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)
    return outward_normals_from_tangents(t)


def max_midpoint_residual(fn: Field, poly: np.ndarray) -> float:
    """Largest ``|fn|`` at edge midpoints of a closed polyline."""
    mid = 0.5 * (poly + np.roll(poly, -1, axis=0))
    return float(np.nanmax(np.abs(fn(mid))))
