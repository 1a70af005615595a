import json

import numpy as np
import pytest

from vinesim import beam, spam, synthesis as Y
from vinesim.units import MM, PSI

B = beam.VineBodyParams()
G = spam.SpamGeometry()
C = Y.DesignCatalog()


def test_lm_planted_root():
    root = np.array([0.3, -1.2, 2.0])

    def system(x):
        x = np.atleast_2d(x)
        return np.column_stack([x[:, 0] - root[0], (x[:, 1] - root[1]) * (1 + x[:, 0] ** 2),
                                np.sin(x[:, 2] - root[2])])

    r = Y.lm_solve(system, [(-1, 1), (-2, 0), (1.0, 3.0)], starts=200, seed=1)
    assert r.residual_norm <= 1e-6
    np.testing.assert_allclose(r.x, root, atol=1e-6)


def test_lm_deterministic_and_failure():
    def system(x):
        x = np.atleast_2d(x)
        return np.column_stack([x[:, 0] ** 2 + 1.0])

    with pytest.raises(Y.LMConvergenceError):
        Y.lm_solve(system, [(-1, 1)], starts=10)
    sysb = Y.spam_system(G, 0.2)
    a = Y.lm_solve(sysb, (Y.M_BOUNDS, Y.PHI_BOUNDS), starts=300, seed=4)
    b = Y.lm_solve(sysb, (Y.M_BOUNDS, Y.PHI_BOUNDS), starts=300, seed=4)
    assert np.array_equal(a.x, b.x)


@pytest.mark.parametrize("m", [0.03, 0.1, 0.25, 0.45])
def test_recover_planted_state(m):
    s = spam.solve_strain_force(G, m)
    res, sat = Y.recover_state(G, s.eps)
    assert sat == s.saturated
    assert res.x[0] == pytest.approx(s.m, abs=1e-6)
    assert res.x[1] == pytest.approx(s.phi_Rc, abs=1e-6)


def test_null_design():
    r = Y.synthesize(0.0, C, B, G)
    assert r.is_null and r.P_act == 0.0 and r.l_0 == 0.0


def test_catalog_validation():
    with pytest.raises(ValueError):
        Y.DesignCatalog(pressures=())
    with pytest.raises(ValueError):
        Y.DesignCatalog(pressures=(2.0, 1.0))
    assert len(C.lengths) == 36 and C.lengths[0] == pytest.approx(10 * MM)


def test_bounds_zero_pressure_catalog():
    assert Y.curvature_bounds(Y.DesignCatalog(pressures=(0.0,)), B, G) == (0.0, 0.0)


def test_bounds_grow_with_pressure_set():
    small = Y.DesignCatalog(pressures=(0.5 * PSI, 1.0 * PSI))
    assert Y.curvature_bounds(C, B, G)[1] >= Y.curvature_bounds(small, B, G)[1]


def test_bounds_against_dense_grid():
    P = np.linspace(0, max(C.pressures), 12)
    L = np.linspace(*C.length_range, 176)
    Pg, Lg = np.meshgrid(P, L)
    th = beam.free_space_equilibrium(B, G, Pg.ravel(), Lg.ravel())
    assert Y.curvature_bounds(C, B, G)[1] == pytest.approx(th.max(), abs=1e-3)


def test_out_of_bounds_names_the_bounds():
    lo, hi = Y.curvature_bounds(C, B, G)
    with pytest.raises(Y.InfeasibleCurvatureError, match=f"{hi:.5g}"):
        Y.synthesize(2 * hi, C, B, G)


def test_round_trip_on_grid():
    lo, hi = Y.curvature_bounds(C, B, G)
    for th in np.linspace(lo * 1.2, hi * 0.98, 20):
        r = Y.synthesize(th, C, B, G, starts=200)
        back = beam.free_space_equilibrium(B, G, r.P_act, r.l_0)
        assert abs(back - th) / th <= 0.05
        assert r.P_act in C.pressures
        assert np.min(np.abs(C.lengths - r.l_0)) < 1e-12


def test_highest_feasible_pressure_selected():
    lo, hi = Y.curvature_bounds(C, B, G)
    th = 0.5 * (lo + hi) * 0.5
    r = Y.synthesize(th, C, B, G, starts=200)
    feas = [c for c in r.candidates if c[3]]
    assert len(feas) >= 2
    assert r.P_act == max(c[0] for c in feas)


def test_table_lookup_agrees_with_synthesis():
    tab = Y.DesignTable(C, B, G)
    lo, hi = tab.bounds
    for th in np.linspace(lo * 1.5, hi * 0.95, 6):
        a = tab.lookup(th)
        b = Y.synthesize(th, C, B, G, starts=100)
        assert (a.P_act, a.l_0) == (b.P_act, b.l_0)


def test_design_round_trip_and_validation():
    d = Y.ActuatorDesign((Y.Section(0.1, 4, 30 * MM, 2 * PSI, 1),
                          Y.Section(0.3, 6, 25 * MM, 1 * PSI, -1)))
    back = Y.ActuatorDesign.loads(d.dumps(meta={"x": 1}))
    assert back.n_curved == 2
    for a, b in zip(d.sections, back.sections):
        assert a.start == pytest.approx(b.start, abs=1e-15)
        assert a.l_0 == pytest.approx(b.l_0, abs=1e-15)
        assert a.P_act == pytest.approx(b.P_act, rel=1e-15)
        assert (a.n_units, a.side) == (b.n_units, b.side)
    d.validate_catalog(C)
    with pytest.raises(ValueError):
        Y.ActuatorDesign((Y.Section(0.1, 4, 30 * MM, PSI, 1), Y.Section(0.15, 4, 30 * MM, PSI, 1)))
    with pytest.raises(ValueError):
        Y.ActuatorDesign((Y.Section(0.1, 4, 30 * MM, PSI, 0),))
    with pytest.raises(ValueError):
        Y.ActuatorDesign.loads(json.dumps({"format": "other"}))
