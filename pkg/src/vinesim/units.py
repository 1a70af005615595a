"""Unit conversions. Everything inside the package is SI."""

PSI = 6894.757  # Pa
MM = 1e-3  # m


def psi_to_pa(p):
    return p * PSI


def pa_to_psi(p):
    return p / PSI


def mm_to_m(x):
    return x * MM


def m_to_mm(x):
    return x / MM
