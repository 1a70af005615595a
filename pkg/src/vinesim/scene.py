"""Planar scenes: obstacles, start pose, goal region, workspace bounds.

Also hosts the benchmark environment generators, the scene file format and
the perturbation model used in robustness studies.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace

import numpy as np

SCENE_FORMAT = "vinesim-scene"
SCENE_VERSION = 1
UNIT_SCALE = {"m": 1.0, "mm": 1e-3}
ENV_NAMES = ("plus", "maze", "pickone", "needle", "long", "tube")


class SceneError(ValueError):
    pass


class SceneParseError(SceneError):
    def __init__(self, msg, line=None, col=None):
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(msg + where)
        self.line, self.col = line, col


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise SceneError("circle radius must be positive")

    @property
    def centroid(self):
        return np.array(self.center)

    def translated(self, d):
        return Circle((self.center[0] + d[0], self.center[1] + d[1]), self.radius)

    def scaled(self, f):
        return Circle(self.center, self.radius * f)

    def aabb(self):
        x, y = self.center
        r = self.radius
        return (x - r, y - r, x + r, y + r)


@dataclass(frozen=True)
class Polygon:
    """Convex polygon, vertices counter-clockwise."""

    vertices: tuple

    def __post_init__(self):
        v = tuple((float(p[0]), float(p[1])) for p in self.vertices)
        object.__setattr__(self, "vertices", v)
        if len(v) < 3:
            raise SceneError("polygon needs at least 3 vertices")
        a = np.asarray(v)
        e = np.roll(a, -1, axis=0) - a
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0):
            raise SceneError("polygon must be strictly convex and counter-clockwise")

    @classmethod
    def box(cls, x0, y0, x1, y1):
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @property
    def centroid(self):
        return np.asarray(self.vertices).mean(axis=0)

    def translated(self, d):
        return Polygon(tuple((x + d[0], y + d[1]) for x, y in self.vertices))

    def scaled(self, f):
        c = self.centroid
        return Polygon(tuple(tuple(c + f * (np.asarray(p) - c)) for p in self.vertices))

    def aabb(self):
        a = np.asarray(self.vertices)
        return (*a.min(axis=0), *a.max(axis=0))


Obstacle = Circle | Polygon


def sdf_circle(c: Circle, pts):
    p = np.asarray(pts, dtype=float)
    return np.hypot(p[..., 0] - c.center[0], p[..., 1] - c.center[1]) - c.radius


def sdf_polygon(poly: Polygon, pts):
    p = np.asarray(pts, dtype=float)[..., None, :]
    a = np.asarray(poly.vertices)
    b = np.roll(a, -1, axis=0)
    e = b - a
    w = p - a
    t = np.clip((w * e).sum(-1) / (e * e).sum(-1), 0.0, 1.0)
    d = np.linalg.norm(w - t[..., None] * e, axis=-1).min(axis=-1)
    # inside iff left of every edge
    cross = e[:, 0] * w[..., 1] - e[:, 1] * w[..., 0]
    inside = np.all(cross >= 0, axis=-1)
    return np.where(inside, -d, d)


def sdf(obstacle, pts):
    """Signed distance, negative inside."""
    return sdf_circle(obstacle, pts) if isinstance(obstacle, Circle) else sdf_polygon(obstacle, pts)


@dataclass(frozen=True)
class Scene:
    obstacles: tuple
    start: tuple
    goal: tuple  # (cx, cy, radius)
    bounds: tuple  # (xmin, ymin, xmax, ymax)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        object.__setattr__(self, "bounds", tuple(float(v) for v in self.bounds))
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise SceneError("empty bounds")
        gx, gy, gr = self.goal
        if not gr > 0:
            raise SceneError("goal radius must be positive")
        if not self.contains(gx, gy):
            raise SceneError("goal outside bounds")
        sx, sy, _ = self.start
        if not self.contains(sx, sy):
            raise SceneError("start outside bounds")
        if self.obstacles and self.min_sdf([[sx, sy]])[0] <= 0:
            raise SceneError("start inside an obstacle")

    def contains(self, x, y):
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1

    @property
    def diagonal(self):
        x0, y0, x1, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)

    def min_sdf(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.obstacles:
            return np.full(len(pts), np.inf)
        return np.min([sdf(o, pts) for o in self.obstacles], axis=0)

    # -- file format -------------------------------------------------
    def to_dict(self, units="m"):
        k = 1.0 / UNIT_SCALE[units]

        def pt(p):
            return [p[0] * k, p[1] * k]

        obs = []
        for o in self.obstacles:
            if isinstance(o, Circle):
                obs.append({"type": "circle", "center": pt(o.center), "radius": o.radius * k})
            else:
                obs.append({"type": "polygon", "vertices": [pt(v) for v in o.vertices]})
        return {
            "format": SCENE_FORMAT, "version": SCENE_VERSION, "units": units,
            "name": self.name,
            "bounds": [b * k for b in self.bounds],
            "start": {"position": pt(self.start), "heading": self.start[2]},
            "goal": {"center": pt(self.goal), "radius": self.goal[2] * k},
            "obstacles": obs,
        }

    def dumps(self, units="m"):
        return json.dumps(self.to_dict(units), indent=2)

    @classmethod
    def loads(cls, text: str) -> "Scene":
        return parse_scene(text)

    def save(self, path, units="m"):
        with open(path, "w") as fh:
            fh.write(self.dumps(units) + "\n")

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path) as fh:
            return parse_scene(fh.read())


def _line_col(text, pos):
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _key_pos(text, key, start=0):
    m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, start)
    return m.start() if m else start


def _obstacle_offsets(text):
    """Character offset of each element of the top-level obstacle list."""
    dec = json.JSONDecoder()
    i = _key_pos(text, "obstacles")
    i = text.find("[", i)
    if i < 0:
        return []
    i += 1
    out = []
    ws = " \t\r\n,"
    while True:
        while i < len(text) and text[i] in ws:
            i += 1
        if i >= len(text) or text[i] == "]":
            return out
        out.append(i)
        _, i = dec.raw_decode(text, i)


def parse_scene(text: str) -> Scene:
    """Parse a scene document; errors carry the line and column."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"malformed scene: {exc.msg}", exc.lineno, exc.colno) from None

    def fail(msg, key=None, pos=None):
        p = _key_pos(text, key) if pos is None else pos
        raise SceneParseError(msg, *_line_col(text, p))

    if not isinstance(doc, dict) or doc.get("format") != SCENE_FORMAT:
        fail("not a scene document", "format", pos=0 if not isinstance(doc, dict) else None)
    if doc.get("version") != SCENE_VERSION:
        fail(f"unsupported scene version {doc.get('version')!r}", "version")
    units = doc.get("units")
    if units not in UNIT_SCALE:
        fail(f"units must be one of {sorted(UNIT_SCALE)}", "units")
    k = UNIT_SCALE[units]

    def num(v, key, pos=None):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            fail(f"{key} must be a finite number", key, pos)
        return float(v)

    def point(v, key, pos=None):
        if not (isinstance(v, list) and len(v) == 2):
            fail(f"{key} must be an [x, y] pair", key, pos)
        return (num(v[0], key, pos) * k, num(v[1], key, pos) * k)

    try:
        b = doc["bounds"]
        if not (isinstance(b, list) and len(b) == 4):
            fail("bounds must be [xmin, ymin, xmax, ymax]", "bounds")
        bounds = tuple(num(v, "bounds") * k for v in b)
        st = doc["start"]
        start = (*point(st.get("position"), "position"), num(st.get("heading"), "heading"))
        g = doc["goal"]
        goal = (*point(g.get("center"), "goal"), num(g.get("radius"), "radius") * k)
    except (KeyError, AttributeError, TypeError) as exc:
        fail(f"missing or invalid field {exc}", pos=0)

    offsets = _obstacle_offsets(text)
    obstacles = []
    for i, o in enumerate(doc.get("obstacles", [])):
        pos = offsets[i] if i < len(offsets) else 0
        if not isinstance(o, dict):
            fail("obstacle must be an object", pos=pos)
        try:
            if o.get("type") == "circle":
                obstacles.append(Circle(point(o.get("center"), "center", pos),
                                        num(o.get("radius"), "radius", pos) * k))
            elif o.get("type") == "polygon":
                vs = o.get("vertices")
                if not isinstance(vs, list):
                    fail("polygon needs a vertex list", pos=pos)
                obstacles.append(Polygon(tuple(point(v, "vertices", pos) for v in vs)))
            else:
                fail(f"unknown obstacle type {o.get('type')!r}", pos=pos)
        except SceneParseError:
            raise
        except SceneError as exc:
            fail(str(exc), pos=pos)
    try:
        return Scene(tuple(obstacles), start, goal, bounds, name=str(doc.get("name", "")))
    except SceneParseError:
        raise
    except SceneError as exc:
        fail(str(exc), pos=0)


def goal_reached(tip_xy, scene: Scene) -> bool:
    """True iff the tip lies in the closed goal disk (and inside bounds)."""
    x, y = float(tip_xy[0]), float(tip_xy[1])
    if not scene.contains(x, y):
        return False
    gx, gy, gr = scene.goal
    return math.hypot(x - gx, y - gy) <= gr


# -- benchmark environments ----------------------------------------------

def _wall(x0, y0, x1, y1, t):
    """Thick straight wall between two points as a rectangle."""
    d = np.array([x1 - x0, y1 - y0], dtype=float)
    L = np.linalg.norm(d)
    u = d / L
    n = np.array([-u[1], u[0]]) * (0.5 * t)
    a, b = np.array([x0, y0]), np.array([x1, y1])
    return Polygon((tuple(a - n), tuple(b - n), tuple(b + n), tuple(a + n)))


def _arc_wall(cx, cy, r, a0, a1, t, pieces=12):
    """Circular wall of centreline radius ``r`` from angle ``a0`` to ``a1``
    as a chain of convex annular-sector quads."""
    out = []
    ri, ro = r - 0.5 * t, r + 0.5 * t
    for k in range(pieces):
        b0 = a0 + (a1 - a0) * k / pieces
        b1 = a0 + (a1 - a0) * (k + 1) / pieces
        if b1 < b0:
            b0, b1 = b1, b0
        pts = [(cx + ri * math.cos(b0), cy + ri * math.sin(b0)),
               (cx + ro * math.cos(b0), cy + ro * math.sin(b0)),
               (cx + ro * math.cos(b1), cy + ro * math.sin(b1)),
               (cx + ri * math.cos(b1), cy + ri * math.sin(b1))]
        out.append(Polygon(tuple(pts)))
    return out


def _plus(cx, cy, arm, width):
    h, w = arm, 0.5 * width
    return [Polygon.box(cx - h, cy - w, cx + h, cy + w),
            Polygon.box(cx - w, cy - h, cx + w, cy + h)]


def make_env(name: str, scale: float = 1.0) -> Scene:
    """Deterministic benchmark scene; all lengths are multiples of ``scale``
    (metres). At the default scale the layouts suit a vine of radius 33 mm
    whose tightest actuated turning radius is about 0.37 m."""
    s = float(scale)
    t = 0.04 * s  # wall thickness

    def W(x0, y0, x1, y1):
        return _wall(x0 * s, y0 * s, x1 * s, y1 * s, t)

    def scene(obs, goal, bounds):
        return Scene(obs, (0.0, 0.0, 0.0), tuple(g * s for g in goal),
                     tuple(b * s for b in bounds), name)

    if name == "tube":
        # elbow channel: the square outer corner stops a straight vine head
        # on, while one constant-curvature section follows the bend
        w = 0.18
        rc = 0.45
        obs = [W(-0.05, -w, 0.2 + rc + w, -w),
               W(0.2 + rc + w, -w, 0.2 + rc + w, 0.85),
               W(-0.05, w, 0.2, w),
               W(0.2 + rc - w, 0.45, 0.2 + rc - w, 0.85)]
        obs += _arc_wall(0.2 * s, rc * s, (rc - w) * s, -0.5 * math.pi, 0.0, t)
        return scene(obs, (0.2 + rc, 0.7, 0.08), (-0.6, -0.7, 1.4, 1.3))
    if name == "plus":
        # uniform grid of crosses, routes between every pair of rows
        obs = []
        for cx in (0.6, 1.1):
            for cy in (-0.35, 0.0, 0.35):
                obs += _plus(cx * s, cy * s, 0.1 * s, 0.05 * s)
        return scene(obs, (1.45, 0.175, 0.1), (-0.1, -0.7, 1.7, 0.7))
    if name == "maze":
        # straight ahead is blocked; the upper passage is a closed pocket,
        # only the lower passage leads on to the goal
        obs = [W(-0.1, 0.55, 1.8, 0.55), W(-0.1, -0.55, 1.8, -0.55),
               W(0.7, -0.2, 0.7, 0.2),      # block straight ahead
               W(0.7, 0.0, 1.1, 0.0),       # pocket floor
               W(1.1, 0.0, 1.1, 0.55),      # pocket end
               W(1.75, -0.55, 1.75, 0.55)]  # far wall
        return scene(obs, (1.45, -0.1, 0.1), (-0.1, -0.6, 1.8, 0.6))
    if name == "pickone":
        # three congruent corridors fed from a common entry; only the
        # upper one opens onto the goal
        w, pitch = 0.2, 0.28
        x0, x1 = 0.7, 1.5
        obs = []
        for k in range(4):
            yc = (-1.5 + k) * pitch
            obs.append(Polygon.box(x0 * s, (yc - 0.04) * s, x1 * s, (yc + 0.04) * s))
        for k in (0, 1):
            yc = (k - 1) * pitch
            obs.append(Polygon.box((x1 - 0.06) * s, (yc - w / 2) * s, x1 * s, (yc + w / 2) * s))
        return scene(obs, (x1 + 0.12, pitch, 0.1), (-0.1, -0.6, x1 + 0.3, 0.6))
    if name == "needle":
        # thin plates with narrow gaps, staggered so that a straight vine
        # sliding along the plates does not get through
        obs = []
        gap, H = 0.13, 0.5
        for x, yc in ((0.5, 0.0), (0.9, 0.12), (1.3, 0.24)):
            obs.append(Polygon.box((x - 0.02) * s, (yc + gap / 2) * s, (x + 0.02) * s, H * s))
            obs.append(Polygon.box((x - 0.02) * s, -H * s, (x + 0.02) * s, (yc - gap / 2) * s))
        return scene(obs, (1.6, 0.3, 0.1), (-0.1, -H, 1.8, H))
    if name == "long":
        # long corridor whose straight continuation is a dead-end stub; a
        # slanted deflector turns a vine that meets it into the side branch
        obs = [W(0.0, -0.2, 2.0, -0.2),     # corridor floor
               W(0.0, 0.2, 1.2, 0.2),       # corridor ceiling up to the branch
               W(2.0, -0.2, 2.0, 0.2),      # end of the stub
               W(1.6, 0.2, 2.0, 0.2),       # stub ceiling
               W(1.2, 0.2, 1.2, 1.2),       # branch walls
               W(1.6, 0.2, 1.6, 1.2),
               W(1.45, -0.03, 1.68, 0.2)]   # deflector
        return scene(obs, (1.4, 0.95, 0.1), (-0.1, -0.3, 2.1, 1.25))
    raise SceneError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")


def straight_corridor(length: float = 1.0, half_width: float = 0.18) -> Scene:
    """Open-ended channel along +x with the goal straight ahead; a vine
    that simply grows reaches it."""
    t = 0.04
    obs = [_wall(-0.05, -half_width, length + 0.2, -half_width, t),
           _wall(-0.05, half_width, length + 0.2, half_width, t)]
    return Scene(obs, (0.0, 0.0, 0.0), (length, 0.0, 0.08),
                 (-0.1, -half_width - 0.1, length + 0.3, half_width + 0.1), "corridor")


# -- perturbation ---------------------------------------------------------

@dataclass(frozen=True)
class Perturbation:
    sigma_pos: float = 0.0
    sigma_size: float = 0.0
    sigma_P: float = 0.0
    sigma_l: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_pos, self.sigma_size, self.sigma_P, self.sigma_l) < 0:
            raise ValueError("perturbation scales must be non-negative")


MAX_RESAMPLE = 100


def _perturb_design(design, rng, p):
    from .synthesis import ActuatorDesign, Section
    secs = []
    prev_end = -np.inf
    for s in design.sections:
        fP = 1.0 + p.sigma_P * rng.standard_normal()
        fl = 1.0 + p.sigma_l * rng.standard_normal()
        start = max(s.start, prev_end)
        sec = Section(start, s.n_units, s.l_0 * max(fl, 0.05), s.P_act * max(fP, 0.0), s.side)
        secs.append(sec)
        prev_end = sec.end
    return ActuatorDesign(tuple(secs))


def perturb(scene: Scene, design, p: Perturbation, stats: dict | None = None):
    """Gaussian perturbation of obstacle poses and sizes and of actuator
    pressures and lengths. Draws producing an invalid scene are rejected and
    redrawn (at most 100 times); the count goes to ``stats["rejected"]``.

    A lengthened section that would overlap its successor pushes the
    successor's start back, so design draws are always valid.
    """
    rng = np.random.default_rng(p.seed)
    if p.sigma_pos == p.sigma_size == p.sigma_P == p.sigma_l == 0:
        if stats is not None:
            stats["rejected"] = 0
        return scene, design
    rejected = 0
    for _ in range(MAX_RESAMPLE):
        n = len(scene.obstacles)
        shift = p.sigma_pos * rng.standard_normal((n, 2))
        size = 1.0 + p.sigma_size * rng.standard_normal(n)
        new_design = _perturb_design(design, rng, p)
        if np.any(size <= 0):
            rejected += 1
            continue
        obs = tuple(o.scaled(f).translated(d) for o, f, d in zip(scene.obstacles, size, shift))
        try:
            out = replace(scene, obstacles=obs)
        except SceneError:
            rejected += 1
            continue
        if stats is not None:
            stats["rejected"] = rejected
        return out, new_design
    raise SceneError(f"no valid perturbation after {MAX_RESAMPLE} draws")
