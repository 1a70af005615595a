import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vinesim import spam
from vinesim.units import PSI

G = spam.SpamGeometry()


def test_saturation_amplitude_reference():
    assert spam.phi_saturated(G) == pytest.approx(np.arccos(5 / 17.18), abs=1e-12)
    assert spam.phi_saturated(G) == pytest.approx(1.275487, abs=1e-6)


def test_saturation_amplitude_limits():
    assert spam.phi_saturated(spam.SpamGeometry(R_c=0.01, R_act=0.0100000001)) < 2e-4
    assert spam.phi_saturated(spam.SpamGeometry(R_c=1e-9, R_act=1.0)) == pytest.approx(
        np.pi / 2, abs=1e-8)


def test_geometry_validation():
    with pytest.raises(ValueError):
        spam.SpamGeometry(R_c=0.02, R_act=0.01)
    with pytest.raises(ValueError):
        spam.SpamGeometry(l_0=0.0)


def test_full_contraction_has_zero_force():
    s = spam.solve_strain_force(G, 0.5, P_act=2 * PSI)
    assert s.F_t == 0.0


@pytest.mark.parametrize("m", [0.02, 0.05, 0.2, 0.45])
def test_unsaturated_residuals(m):
    s = spam.solve_strain_force(G, m, regime="unsaturated")
    r1, r2 = spam.residuals(G, s.m, s.phi_Rc, G.l_0, s.eps)
    assert abs(r1) <= 1e-8 and abs(r2) <= 1e-8
    assert s.l_a == G.l_0


def test_auto_regime_residuals_on_sweep():
    r = spam.solve_batch(G, np.linspace(0.01, 0.5, 200))
    r1, r2 = spam.residuals(G, r["m"], r["phi"], r["l_a"], r["eps"])
    assert np.max(np.abs(r1)) <= 1e-8 and np.max(np.abs(r2)) <= 1e-8
    assert np.all(r["l_a"] <= G.l_0 * (1 + 1e-12))


def test_regime_amplitudes():
    # the unsaturated branch stays below the saturation amplitude, the
    # saturated branch sits on it
    r = spam.solve_batch(G, np.linspace(0.01, 0.5, 100))
    ps = spam.phi_saturated(G)
    assert np.all(r["phi"][~r["saturated"]] <= ps + 1e-12)
    assert np.allclose(r["phi"][r["saturated"]], ps)
    assert r["saturated"].any() and (~r["saturated"]).any()


def test_sweep_is_strictly_monotone():
    m = np.linspace(spam.zero_strain_m(G), 0.5, 50)
    r = spam.solve_batch(G, m)
    assert np.all(np.diff(r["eps"]) > 0)
    assert np.all(np.diff(r["f_per_p"]) < 0)


def test_dense_sweep_monotone():
    m = np.linspace(spam.zero_strain_m(G), 0.5, 5000)
    r = spam.solve_batch(G, m)
    assert np.all(np.diff(r["eps"]) > 0)
    assert np.all(np.diff(r["f_per_p"]) < 0)


def test_sample_curve_endpoints_and_order():
    c = spam.sample_curve(G, 2 * PSI, 2)
    assert c[-1][1] == 0.0
    c = spam.sample_curve(G, 2 * PSI, 60)
    eps, ft = np.array(c).T
    assert np.all(np.diff(eps) > 0) and np.all(np.diff(ft) < 0)
    assert eps[0] == pytest.approx(0.0, abs=1e-12)


def test_force_linear_in_pressure():
    a = np.array(spam.sample_curve(G, 1 * PSI, 20))
    b = np.array(spam.sample_curve(G, 2 * PSI, 20))
    assert np.array_equal(a[:, 0], b[:, 0])
    assert np.allclose(b[:, 1], 2 * a[:, 1], rtol=1e-15, atol=0)


def test_sample_curve_rejects_bad_input():
    with pytest.raises(ValueError):
        spam.sample_curve(G, 0.0, 10)
    with pytest.raises(ValueError):
        spam.sample_curve(G, PSI, 1)


def test_invert_strain_round_trip():
    m = np.array([0.02, 0.1, 0.3, 0.49])
    r = spam.solve_batch(G, m)
    back = spam.invert_strain(G, r["eps"])
    assert np.allclose(back["m"], m, rtol=1e-8)
    with pytest.raises(spam.InfeasibleError):
        spam.invert_strain(G, 2.0)


def test_out_of_range_contraction():
    with pytest.raises(ValueError):
        spam.solve_batch(G, 0.6)
    with pytest.raises(ValueError):
        spam.solve_batch(G, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 0.5), st.floats(8e-3, 80e-3))
def test_states_are_physical(m, l0):
    g = G.with_length(l0)
    try:
        s = spam.solve_strain_force(g, m, P_act=PSI)
    except spam.InfeasibleError:
        # only tiny m can give the slightly negative strain of the
        # pressure correction
        assert m < spam.zero_strain_m(g) + 1e-12
        return
    assert 0 < s.phi_Rc <= np.pi / 2
    assert 0 < s.l_a <= l0 * (1 + 1e-12)
    assert 0 <= s.eps < 1
    assert s.F_t >= 0
    r1, r2 = spam.residuals(g, s.m, s.phi_Rc, s.l_a, s.eps)
    assert abs(r1) <= 1e-8 and abs(r2) <= 1e-8
