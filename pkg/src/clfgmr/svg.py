"""Minimal SVG overlay: demonstrations, reproductions and level sets of V (2-D only)."""
from __future__ import annotations

from pathlib import Path

import contourpy
import numpy as np

from . import clf as clf_mod

WIDTH = 480
PAD = 20


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, lo, hi, width=WIDTH):
        span = np.maximum(hi - lo, 1e-12)
        self.lo, self.scale = lo, (width - 2 * PAD) / float(span.max())
        self.w = int(np.ceil(span[0] * self.scale)) + 2 * PAD
        self.h = int(np.ceil(span[1] * self.scale)) + 2 * PAD
        self.items = []

    def _pt(self, p):
        x = PAD + (p[0] - self.lo[0]) * self.scale
        y = self.h - PAD - (p[1] - self.lo[1]) * self.scale      # y axis points up
        return f"{_fmt(x)},{_fmt(y)}"

    def polyline(self, pts, stroke, width=1.0, dash=None):
        pts = np.asarray(pts)
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        if len(pts) < 2:
            return
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}"{extra} '
                          f'points="{" ".join(self._pt(p) for p in pts)}"/>')

    def marker(self, p, fill, r=3):
        x, y = self._pt(p).split(",")
        self.items.append(f'<circle cx="{x}" cy="{y}" r="{r}" fill="{fill}"/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        return "\n".join([head, f'<rect width="{self.w}" height="{self.h}" fill="white"/>', *self.items, "</svg>"]) + "\n"


def level_set_rings(clf: clf_mod.ClfParams, lo, hi, levels=8, grid=120):
    """Contour polylines of V sampled on a grid over the box [lo, hi]."""
    xs = np.linspace(lo[0], hi[0], grid)
    ys = np.linspace(lo[1], hi[1], grid)
    X, Y = np.meshgrid(xs, ys)
    V = clf_mod.lyapunov(clf, np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(X.shape)
    gen = contourpy.contour_generator(X, Y, V)
    top = float(np.quantile(V, 0.6))
    rings = []
    for level in top * np.linspace(1.0 / levels, 1.0, levels) ** 2:
        rings.extend(gen.lines(level))
    return rings


def write_overlay(path, demos, repros, clf: clf_mod.ClfParams | None = None, levels=8) -> None:
    """Demos dashed black, reproductions red, V level sets grey; target marked."""
    demos = [np.asarray(d) for d in demos]
    repros = [np.asarray(r) for r in repros]
    if any(a.shape[1] != 2 for a in demos + repros):
        raise ValueError("SVG overlay supports 2-D trajectories only")
    pts = np.vstack([a[np.all(np.isfinite(a), axis=1)] for a in demos + repros] + [np.zeros((1, 2))])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    margin = 0.05 * float(np.max(hi - lo))
    lo, hi = lo - margin, hi + margin
    cv = _Canvas(lo, hi)
    if clf is not None:
        for ring in level_set_rings(clf, lo, hi, levels):
            cv.polyline(ring, "#bbbbbb", 0.8)
    for d in demos:
        cv.polyline(d, "black", 1.2, dash="4,3")
    for r in repros:
        cv.polyline(r, "#d62728", 1.5)
    for r in repros:
        cv.marker(r[0], "#1f77b4")
    cv.marker(np.zeros(2), "black", r=4)
    Path(path).write_text(cv.render())
