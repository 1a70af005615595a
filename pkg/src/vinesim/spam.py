"""Force-strain model of a series pneumatic artificial muscle (sPAM).

A sPAM is a thin tube of radius ``R_act`` constricted to ``R_c`` every
``l_0``. For a contraction parameter ``m in (0, 0.5]`` the governing pair of
equations relates the elliptic amplitude ``phi_Rc``, the active length
``l_a`` and the strain ``eps``::

    (E - F/2) / (sqrt(m) cos phi) = l_a / (2 R_c) * (1 - (l_0 / l_a) eps)
    F / (sqrt(m) cos phi)         = l_a / R_c * (1 + a / (2 m cos^2 phi))

with ``F = F(phi, m)`` and ``E = E(phi, m)``. The contraction force is
``F_t = pi P R_c^2 (1 - 2m) / (2 m cos^2 phi)`` and is linear in pressure.

Two regimes exist. Unsaturated: ``l_a = l_0`` and ``phi`` is unknown; the
bubble radius ``R_c / cos(phi)`` stays below ``R_act``. Saturated: the radius
has reached ``R_act``, so ``phi = acos(R_c / R_act)`` and ``l_a <= l_0`` is
unknown. Strain is always measured against the full unit length ``l_0``.
The saturated regime applies once the unsaturated amplitude would exceed
``acos(R_c / R_act)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .roots import NoConvergenceError, bisect
from .special import ellip_FE

R_C_DEFAULT = 5e-3
R_ACT_DEFAULT = 17.18e-3
A_CORR_DEFAULT = 1e-4
L0_DEFAULT = 0.040

M_MAX = 0.5
_PHI_FLOOR = 1e-9
_M_FLOOR = 1e-6


class SpamError(RuntimeError):
    pass


class InfeasibleError(SpamError):
    """A solved state violates the physical invariants of the model."""


@dataclass(frozen=True)
class SpamGeometry:
    R_c: float = R_C_DEFAULT
    R_act: float = R_ACT_DEFAULT
    l_0: float = L0_DEFAULT
    a_corr: float = A_CORR_DEFAULT

    def __post_init__(self):
        if not (0.0 < self.R_c < self.R_act):
            raise ValueError("need 0 < R_c < R_act")
        if not self.l_0 > 0.0:
            raise ValueError("l_0 must be positive")
        if not self.a_corr > 0.0:
            raise ValueError("a_corr must be positive")

    def with_length(self, l_0: float) -> "SpamGeometry":
        return SpamGeometry(self.R_c, self.R_act, float(l_0), self.a_corr)


@dataclass(frozen=True)
class SpamState:
    m: float
    phi_Rc: float
    l_a: float
    eps: float
    F_t: float
    P_act: float
    saturated: bool


def phi_saturated(geom: SpamGeometry) -> float:
    """Amplitude at which the bubble radius reaches the tube radius."""
    return float(np.arccos(geom.R_c / geom.R_act))


def force_per_pressure(R_c, m, phi):
    """Contraction force per unit pressure, ``F_t / P`` in m^2."""
    c = np.cos(phi)
    return np.pi * R_c ** 2 * (1.0 - 2.0 * m) / (2.0 * m * c * c)


def residuals(geom: SpamGeometry, m, phi, l_a, eps):
    """Normalized residuals of the two governing equations.

    Each equation is divided by its natural length-ratio scale
    (``l_a / 2R_c`` and ``l_a / R_c``), so the values are dimensionless.
    """
    m = np.asarray(m, dtype=float)
    phi = np.asarray(phi, dtype=float)
    F, E = ellip_FE(phi, m)
    sc = np.sqrt(m) * np.cos(phi)
    cos2 = np.cos(phi) ** 2
    rhs1 = l_a / (2.0 * geom.R_c) * (1.0 - geom.l_0 / l_a * eps)
    r1 = ((E - 0.5 * F) / sc - rhs1) / (l_a / (2.0 * geom.R_c))
    rhs2 = l_a / geom.R_c * (1.0 + geom.a_corr / (2.0 * m * cos2))
    r2 = (F / sc - rhs2) / (l_a / geom.R_c)
    return r1, r2


def _eq2_scaled(phi, m, lam, a):
    # Second governing equation with l_a = l_0, multiplied by cos(phi) > 0.
    F, _ = ellip_FE(phi, m)
    c = np.cos(phi)
    return F / np.sqrt(m) - lam * (c + a / (2.0 * m * c))


def _first_root_bracket(m, lam, a, phi_hi, n_grid=96):
    """Bracket the smallest positive root of the scaled second equation."""
    m = np.atleast_1d(m)
    grid = np.linspace(_PHI_FLOOR, 1.0, n_grid)[None, :] * phi_hi[:, None]
    vals = _eq2_scaled(grid, m[:, None], lam[:, None], a[:, None])
    pos = vals > 0
    has = pos.any(axis=1)
    idx = np.argmax(pos, axis=1)
    idx = np.maximum(idx, 1)
    rows = np.arange(len(m))
    return grid[rows, idx - 1], grid[rows, idx], has


def solve_batch(geom: SpamGeometry, m, regime="auto", l_0=None):
    """Solve the model for arrays of ``m`` (and optionally ``l_0``).

    Returns a dict of arrays: ``phi``, ``l_a``, ``eps``, ``f_per_p`` (force
    per unit pressure) and ``saturated``. ``regime`` is ``"auto"``,
    ``"unsaturated"`` or ``"saturated"``.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    l0 = np.broadcast_to(geom.l_0 if l_0 is None else np.asarray(l_0, float), m.shape)
    m, l0 = np.broadcast_arrays(m, l0)
    if np.any(m <= 0.0) or np.any(m > M_MAX):
        raise ValueError("m must lie in (0, 0.5]")
    R_c, a = geom.R_c, geom.a_corr
    lam = l0 / R_c
    aa = np.full(m.shape, a)
    phi_sat = phi_saturated(geom)

    if regime == "auto":
        at_sat = _eq2_scaled(np.full(m.shape, phi_sat), m, lam, aa)
        sat = at_sat <= 0.0
    elif regime == "saturated":
        sat = np.ones(m.shape, dtype=bool)
    elif regime == "unsaturated":
        sat = np.zeros(m.shape, dtype=bool)
    else:
        raise ValueError(f"unknown regime {regime!r}")

    phi = np.full(m.shape, phi_sat)
    l_a = l0.copy()
    un = ~sat
    if np.any(un):
        mu, lu, au = m[un], lam[un], aa[un]
        if regime == "auto":
            lo = np.full(mu.shape, _PHI_FLOOR)
            hi = np.full(mu.shape, phi_sat)
        else:
            lo, hi, has = _first_root_bracket(
                mu, lu, au, np.full(mu.shape, 0.5 * np.pi - 1e-6))
            if not np.all(has):
                raise NoConvergenceError("no unsaturated root for some m")
        phi[un] = bisect(lambda p: _eq2_scaled(p, mu, lu, au), lo, hi)
    if np.any(sat):
        ms = m[sat]
        F, _ = ellip_FE(phi[sat], ms)
        c = np.cos(phi[sat])
        l_a[sat] = R_c * F / (np.sqrt(ms) * c) / (1.0 + a / (2.0 * ms * c * c))

    F, E = ellip_FE(phi, m)
    sc = np.sqrt(m) * np.cos(phi)
    eps = (l_a - 2.0 * R_c * (E - 0.5 * F) / sc) / l0
    return {
        "m": m,
        "phi": phi,
        "l_a": l_a,
        "eps": eps,
        "f_per_p": force_per_pressure(R_c, m, phi),
        "saturated": sat,
    }


def solve_strain_force(geom: SpamGeometry, m: float, regime: str = "auto",
                       P_act: float = 0.0) -> SpamState:
    """Solve for the strain and force at contraction parameter ``m``.

    Raises :class:`InfeasibleError` when the solution leaves the physical
    range (negative strain, ``l_a > l_0``, ``eps >= 1``).
    """
    r = solve_batch(geom, m, regime)
    state = SpamState(
        m=float(r["m"][0]), phi_Rc=float(r["phi"][0]), l_a=float(r["l_a"][0]),
        eps=float(r["eps"][0]), F_t=float(P_act * r["f_per_p"][0]),
        P_act=float(P_act), saturated=bool(r["saturated"][0]))
    _validate(geom, state)
    return state


def _validate(geom, s):
    tol = 1e-12
    if not (0.0 < s.phi_Rc <= 0.5 * np.pi):
        raise InfeasibleError(f"phi_Rc={s.phi_Rc} outside (0, pi/2] at m={s.m}")
    if not (0.0 < s.l_a <= geom.l_0 * (1 + tol)):
        raise InfeasibleError(f"active length {s.l_a} outside (0, l_0] at m={s.m}")
    if not (-tol <= s.eps < 1.0):
        raise InfeasibleError(f"strain {s.eps} outside [0, 1) at m={s.m}")
    if s.F_t < 0.0:
        raise InfeasibleError(f"negative force at m={s.m}")


def zero_strain_m(geom: SpamGeometry, l_0=None):
    """Smallest ``m`` with non-negative strain (the fully extended state).

    For very small ``m`` the pressure correction makes the strain slightly
    negative; physical curves start where it crosses zero.
    """
    scalar = l_0 is None or np.ndim(l_0) == 0
    l0 = np.atleast_1d(geom.l_0 if l_0 is None else np.asarray(l_0, float))

    def strain(mm):
        return solve_batch(geom, mm, l_0=l0)["eps"]

    lo = np.full(l0.shape, _M_FLOOR)
    e_lo = strain(lo)
    out = np.where(e_lo >= 0, lo, np.nan)
    need = e_lo < 0
    if np.any(need):
        if np.any(strain(np.full(l0.shape, M_MAX))[need] <= 0):
            raise InfeasibleError("strain never becomes positive")
        root = bisect(strain, lo, np.full(l0.shape, M_MAX))
        # keep the root on the non-negative side
        e = strain(root)
        root = np.where(e < 0, np.nextafter(root, 1.0), root)
        out = np.where(need, root, out)
    return float(out[0]) if scalar else out


def max_strain(geom: SpamGeometry, l_0=None):
    """Strain at full contraction (``m = 0.5``), where the force vanishes."""
    l0 = np.atleast_1d(geom.l_0 if l_0 is None else np.asarray(l_0, float))
    e = solve_batch(geom, np.full(l0.shape, M_MAX), l_0=l0)["eps"]
    return float(e[0]) if (l_0 is None or np.ndim(l_0) == 0) else e


def m_grid(geom: SpamGeometry, n: int, l_0=None):
    """``n`` contraction parameters spanning ``[zero_strain_m, 0.5]``.

    Points are clustered towards the low-``m`` end, where the force changes
    fastest.
    """
    if n < 2:
        raise ValueError("need at least two points")
    m0 = zero_strain_m(geom, l_0)
    u = np.linspace(0.0, 1.0, n)
    return m0 + (M_MAX - m0) * u ** 2


def sample_curve(geom: SpamGeometry, P_act: float, n: int):
    """Sample ``n`` (strain, force) pairs of the actuator at pressure ``P_act``.

    The pairs cover ``m`` from the zero-strain state to full contraction and
    are sorted by strain; the last pair always has zero force.
    """
    if n < 2:
        raise ValueError("need at least two points")
    if not P_act > 0:
        raise ValueError("pressure must be positive")
    ms = m_grid(geom, n)
    try:
        r = solve_batch(geom, ms)
    except NoConvergenceError as exc:
        raise NoConvergenceError(f"sPAM curve at P={P_act} Pa: {exc}") from exc
    eps = r["eps"]
    ft = P_act * r["f_per_p"]
    order = np.argsort(eps, kind="stable")
    return [(float(eps[i]), float(ft[i])) for i in order]


@lru_cache(maxsize=64)
def _strain_range(geom: SpamGeometry):
    return zero_strain_m(geom), max_strain(geom)


def invert_strain(geom: SpamGeometry, eps, l_0=None):
    """Find ``m`` (and the full solution) producing the given strain(s).

    Strains must lie in ``[0, max_strain]``. Returns the same dict as
    :func:`solve_batch`.
    """
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    l0 = np.broadcast_to(geom.l_0 if l_0 is None else np.asarray(l_0, float), eps.shape)
    eps, l0 = np.broadcast_arrays(eps, l0)
    if l_0 is None:
        m0, e1 = _strain_range(geom)
        m_lo, e_max = np.full(eps.shape, m0), np.full(eps.shape, e1)
    else:
        m_lo = np.atleast_1d(zero_strain_m(geom, l0))
        e_max = np.atleast_1d(max_strain(geom, l0))
    if np.any(eps < -1e-12) or np.any(eps > e_max + 1e-12):
        raise InfeasibleError("strain outside the achievable range")
    target = np.clip(eps, 0.0, e_max)
    m = bisect(lambda mm: solve_batch(geom, mm, l_0=l0)["eps"] - target,
               m_lo, np.full(eps.shape, M_MAX), xtol=1e-14)
    return solve_batch(geom, m, l_0=l0)
