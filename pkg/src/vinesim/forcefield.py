"""Tabulated actuator force for the simulator.

The simulator needs ``F_t`` and ``dF_t/deps`` at every joint and descent
iteration, far too often for the nested root solves of the full model. A
force field stores the force per unit pressure on a grid of unit lengths
``l_0``; each row is a cubic Hermite table on a uniform strain grid over
``[0, eps_max(l_0)]``. Between rows the force blends linearly in ``l_0``,
so catalog lengths that sit on the grid evaluate a single row exactly.

Outside the row's strain range the force is clamped: ``F(0)`` for negative
strain (actuator pulled straight) and zero beyond full contraction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import spam


@dataclass(frozen=True)
class ForceField:
    l0_min: float
    l0_step: float
    eps_max: np.ndarray  # (rows,)
    f: np.ndarray  # (rows, n) force per pressure, N/Pa
    df: np.ndarray  # (rows, n) derivative w.r.t. strain
    geometry: tuple = ()
    source: str = "numeric"

    @property
    def n_rows(self):
        return len(self.eps_max)

    @property
    def l0_max(self):
        return self.l0_min + (self.n_rows - 1) * self.l0_step

    def row_weight(self, l0):
        """Row index and blend weight for unit length ``l0``."""
        t = (float(l0) - self.l0_min) / self.l0_step
        if t < -1e-9 or t > self.n_rows - 1 + 1e-9:
            raise ValueError(f"unit length {l0} outside force table "
                             f"[{self.l0_min}, {self.l0_max}]")
        i = int(np.floor(t + 1e-9))
        i = min(max(i, 0), self.n_rows - 2) if self.n_rows > 1 else 0
        w = min(max(t - i, 0.0), 1.0) if self.n_rows > 1 else 0.0
        if w < 1e-9:
            w = 0.0
        return i, w

    def __call__(self, l0, eps):
        """Force per unit pressure and its strain derivative (for tests)."""
        from ._kernel import force_eval
        i, w = self.row_weight(l0)
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        out = np.array([force_eval(self.f, self.df, self.eps_max, i, w, e) for e in eps])
        return out[:, 0], out[:, 1]


def _row_tables(geom, l0s, n_m, n_eps):
    l0s = np.asarray(l0s, float)
    m0 = spam.zero_strain_m(geom, l0s)
    u = np.linspace(0.0, 1.0, n_m)
    m = m0[:, None] + (spam.M_MAX - m0[:, None]) * u[None, :] ** 2
    L = np.broadcast_to(l0s[:, None], m.shape)
    r = spam.solve_batch(geom, m.ravel(), l_0=L.ravel())
    eps = r["eps"].reshape(m.shape)
    fpp = r["f_per_p"].reshape(m.shape)
    eps[:, 0] = np.maximum(eps[:, 0], 0.0)
    emax = eps[:, -1].copy()
    F = np.empty((len(l0s), n_eps))
    dF = np.empty_like(F)
    for k in range(len(l0s)):
        e, f = eps[k], fpp[k]
        keep = np.concatenate([[True], np.diff(e) > 0])
        pc = PchipInterpolator(e[keep], f[keep])
        grid = np.linspace(0.0, emax[k], n_eps)
        F[k] = pc(grid)
        dF[k] = pc(grid, 1)
    F[:, -1] = 0.0
    return emax, F, dF


@lru_cache(maxsize=8)
def numeric_field(geom: spam.SpamGeometry, l0_min=5e-3, l0_max=80e-3, l0_step=0.5e-3,
                  n_m=400, n_eps=400) -> ForceField:
    """Force field from the full actuator model (cached per geometry)."""
    n_rows = int(round((l0_max - l0_min) / l0_step)) + 1
    l0s = l0_min + l0_step * np.arange(n_rows)
    emax, F, dF = _row_tables(geom, l0s, n_m, n_eps)
    for a in (emax, F, dF):
        a.setflags(write=False)
    g = (geom.R_c, geom.R_act, geom.a_corr)
    return ForceField(l0_min, l0_step, emax, F, dF, g, "numeric")


def surrogate_field(model, n_eps=400, n_p=9) -> ForceField:
    """Single-row force field from a trained surrogate.

    The surrogate was trained at one unit length and predicts ``F_t`` from
    ``(P, eps)``. Its row is the pressure-averaged ``F_t / P`` over the
    training pressure range; designs must use the training unit length.
    """
    from .surrogate import infer_batch
    g = model.geometry
    l0 = float(g.l_0)
    P_lo, P_hi = model.in_min[0], model.in_max[0]
    e_hi = float(model.in_max[1])
    Ps = np.linspace(max(P_lo, 1e-9), P_hi, n_p)
    grid = np.linspace(0.0, e_hi, n_eps)
    P, E = np.meshgrid(Ps, grid, indexing="ij")
    out = infer_batch(model, np.column_stack([P.ravel(), E.ravel()]))
    fpp = (np.maximum(out[:, 0], 0.0).reshape(P.shape) / P).mean(axis=0)
    pc = PchipInterpolator(grid, fpp)
    F = pc(grid)[None, :]
    dF = pc(grid, 1)[None, :]
    F[:, -1] = 0.0
    return ForceField(l0, 1.0, np.array([e_hi]), F, dF, (g.R_c, g.R_act, g.a_corr),
                      "surrogate")
