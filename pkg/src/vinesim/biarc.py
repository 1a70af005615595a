"""Biarcs: two tangent-continuous circular arcs joining two planar poses."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Arc:
    start: tuple  # (x, y)
    heading: float  # tangent at the start
    kappa: float  # signed curvature, 1/m
    length: float

    @property
    def turn(self):
        return self.kappa * self.length

    def point(self, s):
        s = np.asarray(s, dtype=float)
        x0, y0 = self.start
        h = self.heading
        if abs(self.kappa) < 1e-12:
            return np.stack([x0 + s * math.cos(h), y0 + s * math.sin(h)], axis=-1)
        k = self.kappa
        return np.stack([x0 + (np.sin(h + k * s) - math.sin(h)) / k,
                         y0 - (np.cos(h + k * s) - math.cos(h)) / k], axis=-1)

    @property
    def end(self):
        p = self.point(self.length)
        return (float(p[0]), float(p[1]), self.heading + self.turn)


def arc_between(p, heading, q):
    """Arc leaving ``p`` along ``heading`` and passing through ``q``."""
    cx, cy = q[0] - p[0], q[1] - p[1]
    L = math.hypot(cx, cy)
    if L == 0:
        return Arc((p[0], p[1]), heading, 0.0, 0.0)
    t = (math.cos(heading), math.sin(heading))
    a = math.atan2(t[0] * cy - t[1] * cx, t[0] * cx + t[1] * cy)
    if abs(a) < 1e-12:
        return Arc((p[0], p[1]), heading, 0.0, L)
    kappa = 2.0 * math.sin(a) / L
    return Arc((p[0], p[1]), heading, kappa, L * a / math.sin(a))


@dataclass(frozen=True)
class Biarc:
    first: Arc
    second: Arc

    @property
    def length(self):
        return self.first.length + self.second.length

    @property
    def arcs(self):
        return (self.first, self.second)

    def sample(self, ds):
        pts = []
        for a in self.arcs:
            n = max(2, int(math.ceil(a.length / ds)) + 1)
            pts.append(a.point(np.linspace(0.0, a.length, n)))
        return np.concatenate(pts)


def biarc(p0, p1, ratio=1.0):
    """Biarc from pose ``p0 = (x, y, heading)`` to pose ``p1``.

    ``ratio`` is the ratio of the first to the second tangent length, the
    free parameter of the family. Returns None when no biarc with positive
    tangent lengths exists for that ratio.
    """
    x0, y0, h0 = p0
    x1, y1, h1 = p1
    t0 = np.array([math.cos(h0), math.sin(h0)])
    t1 = np.array([math.cos(h1), math.sin(h1)])
    v = np.array([x1 - x0, y1 - y0])
    # d1 = ratio * d2 and |v - d1 t0 - d2 t1| = d1 + d2:
    # quadratic in d2 with coefficients below
    u = ratio * t0 + t1
    a = u @ u - (ratio + 1.0) ** 2
    b = -2.0 * (v @ u)
    c = v @ v
    if c == 0.0:
        return None
    if abs(a) < 1e-12:
        if abs(b) < 1e-15:
            return None
        roots = [-c / b]
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            return None
        sq = math.sqrt(disc)
        roots = [(-b - sq) / (2 * a), (-b + sq) / (2 * a)]
    pos = sorted(r for r in roots if r > 0)
    if not pos:
        return None
    d2 = pos[0]
    d1 = ratio * d2
    q1 = np.array([x0, y0]) + d1 * t0
    q2 = np.array([x1, y1]) - d2 * t1
    pm = (d2 * q1 + d1 * q2) / (d1 + d2)
    a1 = arc_between((x0, y0), h0, pm)
    hm = a1.heading + a1.turn
    a2 = arc_between(pm, hm, (x1, y1))
    return Biarc(a1, a2)


def wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi
