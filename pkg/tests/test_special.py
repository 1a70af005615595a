import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special as sps

from vinesim.special import DomainError, carlson_rd, carlson_rf, ellip_E, ellip_F, ellip_FE


def quad_F(phi, m):
    return integrate.quad(lambda t: 1.0 / np.sqrt(1 - m * np.sin(t) ** 2), 0, phi,
                          epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def quad_E(phi, m):
    return integrate.quad(lambda t: np.sqrt(1 - m * np.sin(t) ** 2), 0, phi,
                          epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def test_zero_parameter_reduces_to_amplitude():
    assert ellip_F(0.7, 0.0) == pytest.approx(0.7, abs=1e-15)
    assert ellip_E(0.7, 0.0) == pytest.approx(0.7, abs=1e-15)


def test_second_kind_at_singular_corner():
    assert ellip_E(np.pi / 2, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_first_kind_rejects_singular_corner():
    with pytest.raises(DomainError):
        ellip_F(np.pi / 2, 1.0)


@pytest.mark.parametrize("phi,m", [(-0.1, 0.2), (1.7, 0.2), (0.5, -0.01), (0.5, 1.01),
                                   (np.nan, 0.2)])
def test_domain_errors(phi, m):
    with pytest.raises(DomainError):
        ellip_F(phi, m)
    with pytest.raises(DomainError):
        ellip_E(phi, m)


def test_quadrature_reference_points():
    assert ellip_F(1.0, 0.3) == pytest.approx(quad_F(1.0, 0.3), abs=1e-12)
    assert ellip_E(1.2, 0.5) == pytest.approx(quad_E(1.2, 0.5), abs=1e-12)


def test_matches_scipy_on_grid():
    phi, m = np.meshgrid(np.linspace(0, np.pi / 2 - 1e-3, 40), np.linspace(0, 1, 40))
    F, E = ellip_FE(phi, m)
    assert np.max(np.abs(F - sps.ellipkinc(phi, m))) < 1e-13
    assert np.max(np.abs(E - sps.ellipeinc(phi, m))) < 1e-13


def test_array_shapes_and_scalars():
    assert isinstance(ellip_F(0.3, 0.2), float)
    out = ellip_E(np.zeros((3, 4)), 0.5)
    assert out.shape == (3, 4)


def test_carlson_closed_forms():
    # R_F(x, x, x) = 1/sqrt(x), R_D(x, x, x) = x^(-3/2)
    assert carlson_rf(2.0, 2.0, 2.0) == pytest.approx(2 ** -0.5, rel=1e-14)
    assert carlson_rd(2.0, 2.0, 2.0) == pytest.approx(2 ** -1.5, rel=1e-14)
    # R_F(0, 1, 1) = pi/2
    assert carlson_rf(0.0, 1.0, 1.0) == pytest.approx(np.pi / 2, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, np.pi / 2), st.floats(0, 1))
def test_bounds_between_amplitude_and_sine(phi, m):
    # E <= phi <= F, and E >= sin(phi)
    if m == 1.0 and phi > np.pi / 2 - 1e-9:
        return
    F, E = ellip_FE(phi, m)
    assert E <= phi + 1e-14 <= F + 2e-14
    assert E >= np.sin(phi) - 1e-14


@settings(max_examples=100, deadline=None)
@given(st.floats(0, np.pi / 2), st.floats(0, 0.999))
def test_monotone_in_parameter(phi, m):
    dm = 1e-3
    assert ellip_F(phi, m + dm) >= ellip_F(phi, m) - 1e-15
    assert ellip_E(phi, m + dm) <= ellip_E(phi, m) + 1e-15
