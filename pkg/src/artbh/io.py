"""Deterministic JSON/CSV writers and a minimal native SVG plotter."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


def _clean(obj):
    """JSON-ready copy: numpy scalars and arrays become Python objects, non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def to_json(obj, indent: Optional[int] = 2) -> str:
    return json.dumps(_clean(obj), indent=indent, sort_keys=True, allow_nan=False)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(to_json(obj) + "\n")
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    path.write_text(buf.getvalue())
    return path


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


class SvgPlot:
    """Polylines and points in data coordinates mapped onto a fixed square viewport."""

    def __init__(self, bbox, size: int = 480, margin: int = 40, title: str = ""):
        (self.x0, self.y0), (self.x1, self.y1) = np.asarray(bbox[0], float), np.asarray(bbox[1], float)
        self.size, self.margin, self.title = size, margin, title
        self.items: list[str] = []
        self.legend: list[tuple[str, str]] = []

    def _map(self, p):
        p = np.asarray(p, float)
        w = self.size - 2 * self.margin
        sx = self.margin + (p[..., 0] - self.x0) / (self.x1 - self.x0) * w
        sy = self.size - self.margin - (p[..., 1] - self.y0) / (self.y1 - self.y0) * w
        return sx, sy

    def polyline(self, pts, color: Optional[str] = None, label: str = "", closed: bool = False, width: float = 1.5,
                 dash: str = ""):
        color = color or PALETTE[len(self.legend) % len(PALETTE)]
        pts = np.asarray(pts, float)
        if closed:
            pts = np.vstack([pts, pts[:1]])
        sx, sy = self._map(pts)
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx, sy))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{extra} points="{coords}"/>')
        if label:
            self.legend.append((label, color))

    def points(self, pts, color: str = "#000000", r: float = 2.0):
        sx, sy = self._map(np.atleast_2d(pts))
        self.items.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{r}" fill="{color}"/>' for a, b in zip(sx, sy))

    def render(self) -> str:
        s, m = self.size, self.margin
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">',
               f'<rect x="0" y="0" width="{s}" height="{s}" fill="white"/>',
               f'<rect x="{m}" y="{m}" width="{s - 2 * m}" height="{s - 2 * m}" fill="none" stroke="#444"/>']
        for v, anchor in ((self.x0, "start"), (self.x1, "end")):
            x = m if anchor == "start" else s - m
            out.append(f'<text x="{x}" y="{s - m + 14}" font-size="10" text-anchor="{anchor}">{v:.3g}</text>')
        out.append(f'<text x="{m - 4}" y="{s - m}" font-size="10" text-anchor="end">{self.y0:.3g}</text>')
        out.append(f'<text x="{m - 4}" y="{m + 8}" font-size="10" text-anchor="end">{self.y1:.3g}</text>')
        if self.title:
            out.append(f'<text x="{s / 2}" y="{m - 12}" font-size="12" text-anchor="middle">{self.title}</text>')
        out.extend(self.items)
        for k, (label, color) in enumerate(self.legend):
            y = m + 14 + 14 * k
            out.append(f'<line x1="{m + 8}" y1="{y - 4}" x2="{m + 24}" y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{m + 28}" y="{y}" font-size="10">{label}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.render())
        return path


def curves_svg(path, curves: Sequence, labels: Sequence[str], title: str = "", pad: float = 0.1) -> Path:
    """Closed curves on one plot, box fitted to their vertices."""
    allv = np.vstack([c.vertices for c in curves]) if curves else np.zeros((1, 2))
    lo, hi = allv.min(0), allv.max(0)
    span = float(max(hi - lo)) or 1.0
    mid = 0.5 * (lo + hi)
    half = 0.5 * span * (1 + 2 * pad)
    plot = SvgPlot((mid - half, mid + half), title=title)
    for c, lab in zip(curves, labels):
        plot.polyline(c.vertices, label=lab, closed=True)
    return plot.save(path)
