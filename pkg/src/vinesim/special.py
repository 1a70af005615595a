"""Incomplete Legendre elliptic integrals of the first and second kind.

The parameter convention is ``m = k**2`` (not the modulus ``k``), matching
``scipy.special.ellipkinc``. Both integrals are evaluated with Carlson's
symmetric forms ``R_F`` and ``R_D`` using the duplication theorem, which
converges to machine precision in a handful of iterations for every
point of the real domain ``phi in [0, pi/2]``, ``m in [0, 1]``.
"""
from __future__ import annotations

import numpy as np

HALF_PI = 0.5 * np.pi

# Duplication stops once the spread of the arguments drops below this; the
# fifth-order tail then contributes a relative error well under 1e-15.
_RF_TOL = 1e-3
_RD_TOL = 1e-3
_MAX_ITER = 60


class DomainError(ValueError):
    """Raised when an elliptic argument falls outside the real domain."""


def _check(phi, m):
    phi = np.asarray(phi, dtype=float)
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(phi)) or not np.all(np.isfinite(m)):
        raise DomainError("elliptic arguments must be finite")
    if np.any(phi < 0.0) or np.any(phi > HALF_PI):
        raise DomainError("amplitude phi must lie in [0, pi/2]")
    if np.any(m < 0.0) or np.any(m > 1.0):
        raise DomainError("parameter m must lie in [0, 1]")
    return np.broadcast_arrays(phi, m)


def carlson_rf(x, y, z):
    """Carlson's symmetric integral R_F(x, y, z) for non-negative arguments,
    at most one of which is zero."""
    x, y, z = (np.array(v, dtype=float) for v in np.broadcast_arrays(x, y, z))
    a0 = (x + y + z) / 3.0
    q = np.maximum.reduce([np.abs(a0 - x), np.abs(a0 - y), np.abs(a0 - z)])
    q = q / _RF_TOL
    a = a0.copy()
    for _ in range(_MAX_ITER):
        live = q > np.abs(a)
        if not np.any(live):
            break
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        x = np.where(live, 0.25 * (x + lam), x)
        y = np.where(live, 0.25 * (y + lam), y)
        z = np.where(live, 0.25 * (z + lam), z)
        a = np.where(live, 0.25 * (a + lam), a)
        q = np.where(live, 0.25 * q, q)
    dx = (a - x) / a
    dy = (a - y) / a
    dz = -(dx + dy)
    e2 = dx * dy - dz * dz
    e3 = dx * dy * dz
    series = (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0
              - 3.0 * e2 * e3 / 44.0 - 5.0 * e2 ** 3 / 208.0
              + 3.0 * e3 * e3 / 104.0 + e2 * e2 * e3 / 16.0)
    return series / np.sqrt(a)


def carlson_rd(x, y, z):
    """Carlson's symmetric integral R_D(x, y, z) = R_J(x, y, z, z)."""
    x, y, z = (np.array(v, dtype=float) for v in np.broadcast_arrays(x, y, z))
    a0 = (x + y + 3.0 * z) / 5.0
    q = np.maximum.reduce([np.abs(a0 - x), np.abs(a0 - y), np.abs(a0 - z)])
    q = q / _RD_TOL
    a = a0.copy()
    acc = np.zeros_like(a)
    fac = np.ones_like(a)
    for _ in range(_MAX_ITER):
        live = q > np.abs(a)
        if not np.any(live):
            break
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        acc = np.where(live, acc + fac / (sz * (z + lam)), acc)
        fac = np.where(live, 0.25 * fac, fac)
        x = np.where(live, 0.25 * (x + lam), x)
        y = np.where(live, 0.25 * (y + lam), y)
        z = np.where(live, 0.25 * (z + lam), z)
        a = np.where(live, 0.25 * (a + lam), a)
        q = np.where(live, 0.25 * q, q)
    dx = (a - x) / a
    dy = (a - y) / a
    dz = -(dx + dy) / 3.0
    ea = dx * dy
    eb = dz * dz
    ec = ea - eb
    ed = ea - 6.0 * eb
    ee = ed + ec + ec
    series = (1.0
              + ed * (-3.0 / 14.0 + 9.0 / 88.0 * ed - 4.5 / 26.0 * dz * ee)
              + dz * (ee / 6.0 + dz * (-9.0 / 22.0 * ec + dz * 3.0 / 26.0 * ea)))
    return 3.0 * acc + fac * series / (a * np.sqrt(a))


def _scalarize(out, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(out)
    return out


def ellip_F(phi, m):
    """Incomplete elliptic integral of the first kind,
    ``F(phi, m) = int_0^phi dt / sqrt(1 - m sin^2 t)``.

    Raises :class:`DomainError` outside ``phi in [0, pi/2]``, ``m in [0, 1]``
    and at the logarithmic singularity ``(phi, m) = (pi/2, 1)``.
    """
    p, mm = _check(phi, m)
    s = np.sin(p)
    c = np.cos(p)
    # 1 - m sin^2 without the cancellation near phi = pi/2, m = 1
    y = c * c + (1.0 - mm) * s * s
    if np.any((p >= HALF_PI) & (mm >= 1.0)):
        raise DomainError("F(phi, m) diverges at phi = pi/2, m = 1")
    out = s * carlson_rf(c * c, y, 1.0)
    return _scalarize(out, phi, m)


def ellip_E(phi, m):
    """Incomplete elliptic integral of the second kind,
    ``E(phi, m) = int_0^phi sqrt(1 - m sin^2 t) dt``."""
    p, mm = _check(phi, m)
    s = np.sin(p)
    c = np.cos(p)
    # 1 - m sin^2 without the cancellation near phi = pi/2, m = 1
    y = c * c + (1.0 - mm) * s * s
    out = np.empty_like(s)
    # R_F and R_D need at most one zero argument; (pi/2, 1) has two.
    corner = (p >= HALF_PI) & (mm >= 1.0)
    reg = ~corner
    if np.any(reg):
        sr, cr, yr, mr = s[reg], c[reg], y[reg], mm[reg]
        out[reg] = (sr * carlson_rf(cr * cr, yr, 1.0)
                    - mr * sr ** 3 / 3.0 * carlson_rd(cr * cr, yr, 1.0))
    out[corner] = s[corner]
    return _scalarize(out, phi, m)


def ellip_FE(phi, m):
    """Return ``(F(phi, m), E(phi, m))`` sharing one R_F evaluation."""
    p, mm = _check(phi, m)
    s = np.sin(p)
    c = np.cos(p)
    # 1 - m sin^2 without the cancellation near phi = pi/2, m = 1
    y = c * c + (1.0 - mm) * s * s
    if np.any((p >= HALF_PI) & (mm >= 1.0)):
        raise DomainError("F(phi, m) diverges at phi = pi/2, m = 1")
    rf = carlson_rf(c * c, y, 1.0)
    rd = carlson_rd(c * c, y, 1.0)
    f = s * rf
    e = f - mm * s ** 3 / 3.0 * rd
    return _scalarize(f, phi, m), _scalarize(e, phi, m)
