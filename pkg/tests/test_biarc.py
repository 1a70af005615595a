import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vinesim.biarc import Arc, arc_between, biarc, wrap


def _check(b, p0, p1):
    a1, a2 = b.arcs
    assert a1.start == pytest.approx(p0[:2], abs=1e-12)
    assert a1.heading == pytest.approx(p0[2], abs=1e-12)
    ex, ey, eh = a2.end
    assert math.hypot(ex - p1[0], ey - p1[1]) <= 1e-9
    assert abs(wrap(eh - p1[2])) <= 1e-9
    # junction: shared point and shared tangent
    jx, jy, jh = a1.end
    assert math.hypot(jx - a2.start[0], jy - a2.start[1]) <= 1e-12
    assert abs(wrap(jh - a2.heading)) <= 1e-12


def test_random_biarcs_meet_their_poses():
    rng = np.random.default_rng(0)
    built = 0
    for _ in range(500):
        p0 = tuple(rng.uniform(-1, 1, 2)) + (rng.uniform(-np.pi, np.pi),)
        p1 = tuple(rng.uniform(-1, 1, 2)) + (rng.uniform(-np.pi, np.pi),)
        for r in (0.5, 1.0, 2.0):
            b = biarc(p0, p1, r)
            if b is not None:
                _check(b, p0, p1)
                built += 1
    assert built > 1000


def test_straight_biarc():
    b = biarc((0, 0, 0), (1, 0, 0))
    assert b.length == pytest.approx(1.0, abs=1e-12)
    assert all(abs(a.kappa) < 1e-9 for a in b.arcs)


def test_semicircle():
    b = biarc((0, 0, 0), (0, 1, np.pi))
    _check(b, (0, 0, 0), (0, 1, np.pi))
    assert b.length == pytest.approx(np.pi / 2, rel=1e-9)
    assert all(a.kappa == pytest.approx(2.0, rel=1e-9) for a in b.arcs)


def test_coincident_points():
    assert biarc((0, 0, 0), (0, 0, 1.0)) is None


def test_arc_through_point():
    a = arc_between((0, 0), 0.0, (1, 1))
    assert a.kappa == pytest.approx(1.0, rel=1e-12)
    assert a.end[:2] == pytest.approx((1, 1), abs=1e-12)
    assert Arc((0, 0), 0.0, 0.0, 2.0).end == pytest.approx((2, 0, 0), abs=1e-15)


def test_samples_lie_on_arcs():
    b = biarc((0, 0, 0.3), (0.8, 0.5, 1.2))
    pts = b.sample(0.01)
    assert np.max(np.hypot(*np.diff(pts, axis=0).T)) <= 0.0101


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3), st.floats(-3, 3),
       st.sampled_from([0.5, 1.0, 2.0]))
def test_biarc_property(x, y, h0, h1, r):
    if math.hypot(x, y) < 1e-3:
        return
    b = biarc((0.0, 0.0, h0), (x, y, h1), r)
    if b is not None:
        _check(b, (0.0, 0.0, h0), (x, y, h1))
