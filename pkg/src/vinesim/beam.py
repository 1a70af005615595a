"""Restoring moment of the inflated vine body and the per-segment moment
balance against sPAM actuation.

Angles here are unsigned; the bending direction is carried by the side of
the body the actuator is mounted on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spam
from .roots import NoConvergenceError, bisect
from .units import PSI

THETA_MAX = 0.5 * np.pi


@dataclass(frozen=True)
class VineBodyParams:
    R_vine: float = 33.35e-3
    P_vine: float = 1.5 * PSI
    eps_critical: float = 0.01
    l_seg: float = 25e-3

    def __post_init__(self):
        if not (self.R_vine > 0 and self.P_vine > 0 and self.l_seg > 0):
            raise ValueError("body parameters must be positive")
        if not (0 < self.eps_critical < 1):
            raise ValueError("eps_critical must lie in (0, 1)")

    @property
    def moment_scale(self) -> float:
        """Fully wrinkled restoring moment ``pi P R^3``."""
        return np.pi * self.P_vine * self.R_vine ** 3


def wrinkle_angle(body: VineBodyParams, theta):
    """Angle ``gamma_0`` of the wrinkled sector; only defined past onset."""
    s = np.sin(0.5 * np.asarray(theta, dtype=float))
    return np.arccos(2.0 * body.eps_critical / s - 1.0)


def _wrinkled_shape(g):
    # written in d = pi - gamma_0, with series where both sides cancel
    d = np.pi - np.asarray(g, dtype=float)
    d2 = d * d
    small = d < 1e-2
    with np.errstate(invalid="ignore", divide="ignore"):
        num = np.where(small, d2 * d * (4 / 3 - d2 * (4 / 15 - d2 * 8 / 315)),
                       2 * d - np.sin(2 * d))
        den = np.where(small, d2 * d * (1 / 3 - d2 * (1 / 30 - d2 / 840)),
                       np.sin(d) - d * np.cos(d))
        out = np.where(d > 0, num / (4 * den), 1.0)
    return float(out) if np.ndim(out) == 0 else out


def restoring_moment(body: VineBodyParams, theta):
    """Restoring moment (N m) of a segment bent by ``theta >= 0``.

    Below wrinkling onset (``sin(theta/2) < eps_critical``) the moment ramps
    linearly in ``sin(theta/2)`` from zero to the onset value
    ``pi P R^3 / 2``, so the curve is continuous.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0):
        raise ValueError("theta must be non-negative")
    s = np.sin(0.5 * th)
    ec = body.eps_critical
    wr = s >= ec
    out = 0.5 * s / ec
    if np.any(wr):
        arg = 2.0 * ec / s[wr] - 1.0 if np.ndim(s) else 2.0 * ec / s - 1.0
        g = np.arccos(arg)
        if np.ndim(out):
            out = np.array(out, dtype=float)
            out[wr] = _wrinkled_shape(g)
        else:
            out = _wrinkled_shape(g)
    res = body.moment_scale * out
    return float(res) if np.ndim(res) == 0 else res


def moment_arm(body: VineBodyParams, R_act: float) -> float:
    return 2.0 * body.R_vine + R_act


def segment_strain(body: VineBodyParams, R_act: float, theta):
    """Actuator strain produced by a bend of ``theta`` over one segment."""
    th = np.asarray(theta, dtype=float)
    res = moment_arm(body, R_act) * th / body.l_seg
    return float(res) if np.ndim(res) == 0 else res


def net_moment(body: VineBodyParams, R_act: float, theta, F_t):
    """Restoring moment minus the actuator moment ``F_t (2 R_vine + R_act)``."""
    res = restoring_moment(body, theta) - np.asarray(F_t, float) * moment_arm(body, R_act)
    return float(res) if np.ndim(res) == 0 else res


def free_space_equilibrium(body: VineBodyParams, geom: spam.SpamGeometry, P_act,
                           l_0=None):
    """Per-segment bend at which actuation balances the restoring moment.

    ``P_act`` and ``l_0`` may be arrays (broadcast together). The solve runs
    over the contraction parameter ``m``: strain increases and force
    decreases monotonically in ``m``, so the net moment is monotone and the
    root is unique. Returns 0 where the pressure is zero.
    """
    P = np.atleast_1d(np.asarray(P_act, dtype=float))
    l0 = np.atleast_1d(np.asarray(geom.l_0 if l_0 is None else l_0, dtype=float))
    P, l0 = np.broadcast_arrays(P, l0)
    scalar = np.ndim(P_act) == 0 and (l_0 is None or np.ndim(l_0) == 0)
    if np.any(P < 0):
        raise ValueError("pressure must be non-negative")
    out = np.zeros(P.shape)
    act = P > 0
    if np.any(act):
        Pa, la = P[act], l0[act]
        arm = moment_arm(body, geom.R_act)

        def balance(m):
            r = spam.solve_batch(geom, m, l_0=la)
            th = r["eps"] * body.l_seg / arm
            return restoring_moment(body, np.maximum(th, 0.0)) - Pa * r["f_per_p"] * arm

        # below the zero-strain point the bend clamps to 0, so the balance
        # is already negative at the floor
        lo = np.full(la.shape, spam._M_FLOOR)
        hi = np.full(la.shape, spam.M_MAX)
        m_star = bisect(balance, lo, hi, xtol=1e-15)
        r = spam.solve_batch(geom, m_star, l_0=la)
        theta = np.maximum(r["eps"], 0.0) * body.l_seg / arm
        if np.any(theta > THETA_MAX):
            raise NoConvergenceError("equilibrium beyond the per-segment limit")
        out[act] = theta
    return float(out[0]) if scalar else out
