import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vinesim import scene as S
from vinesim.synthesis import ActuatorDesign, Section
from vinesim.units import MM, PSI


def _boundary_samples_circle(c, n):
    a = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([c.center[0] + c.radius * np.cos(a), c.center[1] + c.radius * np.sin(a)])


def _boundary_samples_polygon(poly, n):
    v = np.asarray(poly.vertices)
    w = np.roll(v, -1, axis=0)
    t = np.linspace(0, 1, n, endpoint=False)[:, None]
    return np.concatenate([a + t * (b - a) for a, b in zip(v, w)])


def _inside_ray_cast(poly, p):
    v = np.asarray(poly.vertices)
    x, y = p
    inside = False
    for (x0, y0), (x1, y1) in zip(v, np.roll(v, -1, axis=0)):
        if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
            inside = not inside
    return inside


def test_circle_sdf_against_sampling():
    c = S.Circle((0.3, -0.2), 0.15)
    q = np.random.default_rng(0).uniform(-0.5, 1.0, (40, 2))
    b = _boundary_samples_circle(c, 400_000)
    for p in q:
        d = np.min(np.hypot(*(b - p).T))
        sign = -1 if np.hypot(*(p - c.center)) < c.radius else 1
        assert S.sdf(c, p) == pytest.approx(sign * d, abs=1e-9)


def test_polygon_sdf_against_sampling():
    poly = S.Polygon(((0, 0), (0.4, -0.1), (0.5, 0.3), (0.1, 0.4)))
    q = np.random.default_rng(1).uniform(-0.3, 0.8, (40, 2))
    b = _boundary_samples_polygon(poly, 100_000)
    for p in q:
        d = np.min(np.hypot(*(b - p).T))
        sign = -1 if _inside_ray_cast(poly, p) else 1
        assert S.sdf(poly, p) == pytest.approx(sign * d, abs=1e-6)


def test_sdf_continuous_across_boundary():
    poly = S.Polygon.box(0, 0, 1, 1)
    t = np.linspace(-0.1, 0.1, 2001)
    pts = np.column_stack([t, np.full_like(t, 0.5)])
    d = S.sdf(poly, pts)
    assert np.max(np.abs(np.diff(d))) <= (t[1] - t[0]) * (1 + 1e-9)
    assert S.sdf(poly, [0.0, 0.5]) == 0.0


def test_shape_validation():
    with pytest.raises(S.SceneError):
        S.Circle((0, 0), 0.0)
    with pytest.raises(S.SceneError):
        S.Polygon(((0, 0), (1, 1), (1, 0)))  # clockwise
    with pytest.raises(S.SceneError):
        S.Polygon(((0, 0), (1, 0)))


def test_scene_validation():
    box = S.Polygon.box(-0.1, -0.1, 0.1, 0.1)
    with pytest.raises(S.SceneError, match="inside an obstacle"):
        S.Scene((box,), (0, 0, 0), (1, 0, 0.1), (-1, -1, 2, 1))
    with pytest.raises(S.SceneError):
        S.Scene((), (0, 0, 0), (5, 0, 0.1), (-1, -1, 2, 1))
    with pytest.raises(S.SceneError):
        S.Scene((), (0, 0, 0), (1, 0, 0.0), (-1, -1, 2, 1))


@pytest.mark.parametrize("name", S.ENV_NAMES)
@pytest.mark.parametrize("units", ["m", "mm"])
def test_serialization_round_trip(name, units):
    s = S.make_env(name)
    back = S.parse_scene(s.dumps(units))
    if units == "m":
        assert back == s
    else:
        assert back.name == s.name and len(back.obstacles) == len(s.obstacles)
        np.testing.assert_allclose(back.bounds, s.bounds, rtol=1e-15)
        for a, b in zip(s.obstacles, back.obstacles):
            np.testing.assert_allclose(np.ravel(a.vertices), np.ravel(b.vertices), rtol=1e-14, atol=1e-16)


def test_file_round_trip(tmp_path):
    s = S.Scene((S.Circle((0.5, 0.2), 0.1),), (0, 0, 0.3), (1, 0, 0.1), (-1, -1, 2, 1), "c")
    p = tmp_path / "s.json"
    s.save(p)
    assert S.Scene.load(p) == s


def _doc():
    return json.loads(S.straight_corridor().dumps())


def test_parse_error_malformed_json():
    text = S.straight_corridor().dumps()
    lines = text.splitlines()
    lines[3] = lines[3].replace(":", "", 1)
    with pytest.raises(S.SceneParseError) as e:
        S.parse_scene("\n".join(lines))
    assert e.value.line == 4 and e.value.col is not None


def test_parse_error_locates_bad_obstacle():
    d = _doc()
    d["obstacles"][1] = {"type": "hexagon"}
    text = json.dumps(d, indent=2)
    with pytest.raises(S.SceneParseError, match="hexagon") as e:
        S.parse_scene(text)
    line = text.splitlines()[e.value.line - 1]
    assert '"type": "hexagon"' in line or line.strip() == "{"
    # the reported line is inside the second obstacle, after the first one
    first = text.find('"type": "polygon"')
    assert e.value.line > text.count("\n", 0, first) + 1


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d.update(units="ft"), "units"),
    (lambda d: d.update(version=9), "version"),
    (lambda d: d.update(format="x"), "scene document"),
    (lambda d: d["goal"].update(radius="big"), "radius"),
    (lambda d: d.update(bounds=[0, 0, 1]), "bounds"),
])
def test_parse_errors_carry_position(mutate, msg):
    d = _doc()
    mutate(d)
    with pytest.raises(S.SceneParseError, match=msg) as e:
        S.parse_scene(json.dumps(d, indent=2))
    assert e.value.line >= 1 and e.value.col >= 1


def test_goal_reached_boundary_conventions():
    s = S.Scene((), (0, 0, 0), (0.5, 0.0, 0.25), (-0.1, -0.5, 1.0, 0.5))
    gx, gy, gr = s.goal
    assert S.goal_reached((gx, gy), s)
    assert S.goal_reached((gx + gr, gy), s)
    assert not S.goal_reached((gx + gr * (1 + 1e-12), gy), s)
    small = S.Scene((), (0, 0, 0), (0.95, 0, 0.1), (-0.1, -0.5, 1.0, 0.5))
    assert not S.goal_reached((1.01, 0.0), small)  # in the disk, out of bounds


@pytest.mark.parametrize("name", S.ENV_NAMES)
def test_envs_well_formed(name):
    s = S.make_env(name)
    assert s.name == name and len(s.obstacles) > 0
    # goal disk clear of obstacles
    gx, gy, _ = s.goal
    assert s.min_sdf([[gx, gy]])[0] > 0
    x0, y0, x1, y1 = s.bounds
    for o in s.obstacles:
        a = o.aabb()
        assert a[0] >= x0 - 0.1 and a[2] <= x1 + 0.1


@pytest.mark.parametrize("name", S.ENV_NAMES)
def test_envs_scale_uniformly(name):
    a, b = S.make_env(name), S.make_env(name, scale=2.0)
    np.testing.assert_allclose(b.bounds, 2 * np.array(a.bounds), rtol=1e-12)
    np.testing.assert_allclose(b.goal, 2 * np.array(a.goal), rtol=1e-12)


def test_unknown_env():
    with pytest.raises(S.SceneError, match="tube"):
        S.make_env("spiral")


def test_pickone_has_three_congruent_corridors():
    s = S.make_env("pickone")
    # probe the centreline of each corridor halfway along
    ys = [-0.28, 0.0, 0.28]
    clear = [s.min_sdf([[1.1, y]])[0] for y in ys]
    assert np.allclose(clear, clear[0], atol=1e-12) and clear[0] > 0.05
    # the lower two are closed at the far end, the upper one is open
    ends = [s.min_sdf([[1.47, y]])[0] for y in ys]
    assert ends[0] < 0 and ends[1] < 0 and ends[2] > 0


def test_straight_corridor_goal_ahead():
    s = S.straight_corridor(length=0.8)
    assert s.goal[:2] == (0.8, 0.0)
    x = np.linspace(0, 0.8, 200)
    assert np.all(s.min_sdf(np.column_stack([x, 0 * x])) > 0.1)


DESIGN = ActuatorDesign((Section(0.1, 4, 30 * MM, 2 * PSI, 1),))


def test_perturb_identity_and_determinism():
    s = S.make_env("maze")
    st_ = {}
    out, d = S.perturb(s, DESIGN, S.Perturbation(), st_)
    assert out is s and d is DESIGN and st_["rejected"] == 0
    p = S.Perturbation(0.01, 0.05, 0.05, 0.05, seed=3)
    a, b = S.perturb(s, DESIGN, p), S.perturb(s, DESIGN, p)
    assert a == b
    c = S.perturb(s, DESIGN, S.Perturbation(0.01, 0.05, 0.05, 0.05, seed=4))
    assert c != a


def test_perturb_preserves_counts():
    s = S.make_env("needle")
    for seed in range(20):
        out, d = S.perturb(s, DESIGN, S.Perturbation(0.02, 0.1, 0.1, 0.1, seed=seed))
        assert len(out.obstacles) == len(s.obstacles)
        assert d.n_curved == DESIGN.n_curved


def test_perturb_displacement_statistics():
    # one circle, far from the start, so no draw is ever rejected
    s = S.Scene((S.Circle((1.0, 0.0), 0.05),), (0, 0, 0), (1.5, 0, 0.1), (-1, -1, 3, 1))
    sig = 0.01
    shifts = np.array([S.perturb(s, DESIGN, S.Perturbation(sigma_pos=sig, seed=k))[0]
                       .obstacles[0].center for k in range(10_000)]) - (1.0, 0.0)
    assert np.std(shifts[:, 0]) == pytest.approx(sig, rel=0.05)
    assert np.std(shifts[:, 1]) == pytest.approx(sig, rel=0.05)


def test_perturb_rejects_and_records():
    # obstacle of side 0.2 right next to the start: large shifts can cover it
    s = S.Scene((S.Polygon.box(0.05, -0.1, 0.25, 0.1),), (0, 0, 0), (1, 0, 0.1), (-1, -1, 2, 1))
    total = 0
    for seed in range(50):
        st_ = {}
        out, _ = S.perturb(s, DESIGN, S.Perturbation(sigma_pos=0.05, seed=seed), st_)
        assert out.min_sdf([[0, 0]])[0] > 0
        total += st_["rejected"]
    assert total > 0


def test_negative_scale_rejected():
    with pytest.raises(ValueError):
        S.Perturbation(sigma_pos=-1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 0.5))
def test_circle_sdf_is_one_lipschitz(x, y, r):
    c = S.Circle((0.1, 0.2), r)
    p = np.array([x, y])
    q = p + np.array([1e-3, -2e-3])
    assert abs(S.sdf(c, q) - S.sdf(c, p)) <= np.hypot(1e-3, 2e-3) * (1 + 1e-9)
