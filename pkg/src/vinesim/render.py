"""Static SVG views of scenes, vines and result grids.

Rendering only reads its inputs; nothing here feeds back into numerics.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .scene import Circle, Scene


class _Canvas:
    def __init__(self, bounds, width=800, margin=20):
        x0, y0, x1, y1 = bounds
        self.x0, self.y1 = x0, y1
        self.k = (width - 2 * margin) / (x1 - x0)
        self.m = margin
        self.w = width
        self.h = int(round((y1 - y0) * self.k + 2 * margin))
        self.items = []

    def xy(self, x, y):
        return self.m + (x - self.x0) * self.k, self.m + (self.y1 - y) * self.k

    def polyline(self, pts, stroke, width_m=None, width_px=1.5, opacity=1.0):
        if len(pts) < 2:
            return
        s = " ".join("%.2f,%.2f" % self.xy(x, y) for x, y in pts)
        w = width_px if width_m is None else width_m * self.k
        self.items.append(f'<polyline points="{s}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{w:.2f}" stroke-linecap="round" '
                          f'stroke-linejoin="round" opacity="{opacity}"/>')

    def polygon(self, pts, fill):
        s = " ".join("%.2f,%.2f" % self.xy(x, y) for x, y in pts)
        self.items.append(f'<polygon points="{s}" fill="{fill}"/>')

    def circle(self, x, y, r, fill, stroke="none", opacity=1.0):
        cx, cy = self.xy(x, y)
        self.items.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r * self.k:.2f}" '
                          f'fill="{fill}" stroke="{stroke}" opacity="{opacity}"/>')

    def text(self, x_px, y_px, s, size=12):
        self.items.append(f'<text x="{x_px}" y="{y_px}" font-family="sans-serif" '
                          f'font-size="{size}">{escape(s)}</text>')

    def svg(self):
        body = "\n".join(self.items)
        return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" '
                f'fill="white"/>\n{body}\n</svg>\n')


def scene_svg(scene: Scene, *, vine_points=None, vine_radius=None, tip_paths=(),
              title="", tree=None) -> str:
    """SVG of a scene, optionally with a vine body, tip paths and a reverse
    tree (drawn as its biarc edges)."""
    c = _Canvas(scene.bounds)
    x0, y0, x1, y1 = scene.bounds
    c.polyline([(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)], "#999")
    for o in scene.obstacles:
        if isinstance(o, Circle):
            c.circle(*o.center, o.radius, "#555")
        else:
            c.polygon(o.vertices, "#555")
    gx, gy, gr = scene.goal
    c.circle(gx, gy, gr, "#7c7", "#393", 0.6)
    if tree is not None:
        for e in tree.edges:
            if e is not None:
                c.polyline(e.sample(0.02), "#99c", width_px=0.6, opacity=0.7)
    for k, path in enumerate(tip_paths):
        c.polyline(np.asarray(path)[:, :2], ["#c33", "#36c", "#c93"][k % 3], width_px=1.2)
    if vine_points is not None:
        c.polyline(np.asarray(vine_points), "#e9a", width_m=2 * (vine_radius or 0.03),
                   opacity=0.55)
        c.polyline(np.asarray(vine_points), "#a35", width_px=1.0)
    sx, sy, _ = scene.start
    c.circle(sx, sy, 0.01, "#000")
    if title:
        c.text(c.m, c.m - 5, title)
    return c.svg()


def heatmap_svg(values, row_labels, col_labels, title="", row_name="", col_name="") -> str:
    """Grid of values in [0, 1] as coloured cells with their numbers."""
    v = np.asarray(values, dtype=float)
    n_r, n_c = v.shape
    cell, left, top = 70, 110, 50
    w, h = left + n_c * cell + 20, top + n_r * cell + 50
    items = [f'<text x="{left}" y="25" font-family="sans-serif" font-size="14">'
             f'{escape(title)}</text>']
    for i in range(n_r):
        for j in range(n_c):
            x = float(np.clip(v[i, j], 0, 1))
            r, g = int(220 * (1 - x) + 30), int(190 * x + 40)
            items.append(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                         f'height="{cell}" fill="rgb({r},{g},80)" stroke="white"/>')
            items.append(f'<text x="{left + j * cell + cell / 2}" y="{top + i * cell + cell / 2 + 5}" '
                         f'text-anchor="middle" font-family="sans-serif" font-size="13">'
                         f'{v[i, j]:.3f}</text>')
        items.append(f'<text x="{left - 8}" y="{top + i * cell + cell / 2 + 5}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="12">{escape(str(row_labels[i]))}</text>')
    for j in range(n_c):
        items.append(f'<text x="{left + j * cell + cell / 2}" y="{top + n_r * cell + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" font-size="12">'
                     f'{escape(str(col_labels[j]))}</text>')
    items.append(f'<text x="{left}" y="{top + n_r * cell + 40}" font-family="sans-serif" '
                 f'font-size="12">columns: {escape(col_name)}; rows: {escape(row_name)}</text>')
    body = "\n".join(items)
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n<rect width="100%" height="100%" '
            f'fill="white"/>\n{body}\n</svg>\n')
