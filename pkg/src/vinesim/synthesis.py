"""Actuator design synthesis: from a target per-segment bend to a
fabricable (pressure, unit length) pair.

Stage one finds, for each allowed pressure, the continuous unit length whose
free-space equilibrium produces the target bend. Stage two recovers the
actuator's internal state ``(m, phi_Rc)`` from the resulting strain with a
multistart Levenberg-Marquardt solve. Among pressures that still reproduce
the bend after rounding the length to the fabrication grid, the highest
pressure wins.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import beam, spam
from .roots import NoConvergenceError, bisect
from .units import MM, PSI

DESIGN_FORMAT = "vinesim-design"
DESIGN_VERSION = 1
CURVATURE_RTOL = 0.05


class InfeasibleCurvatureError(ValueError):
    """No catalog design produces the requested bend."""


class LMConvergenceError(RuntimeError):
    def __init__(self, msg, best_residual):
        super().__init__(msg)
        self.best_residual = best_residual


DEFAULT_PRESSURES = tuple(p * PSI for p in (0.5, 1.0, 1.5, 2.0, 2.5))


@dataclass(frozen=True)
class DesignCatalog:
    pressures: tuple = DEFAULT_PRESSURES
    length_resolution: float = 1e-3
    length_range: tuple = (10e-3, 45e-3)

    def __post_init__(self):
        ps = tuple(float(p) for p in self.pressures)
        if not ps:
            raise ValueError("pressure set must be non-empty")
        if list(ps) != sorted(ps) or any(p < 0 for p in ps):
            raise ValueError("pressures must be sorted and non-negative")
        object.__setattr__(self, "pressures", ps)
        lo, hi = (float(v) for v in self.length_range)
        object.__setattr__(self, "length_range", (lo, hi))
        if not (self.length_resolution > 0 and lo >= self.length_resolution and hi >= lo):
            raise ValueError("invalid length range")

    @property
    def lengths(self) -> np.ndarray:
        """Fabricable unit lengths on the resolution grid."""
        lo, hi = self.length_range
        r = self.length_resolution
        k0 = int(np.ceil(lo / r - 1e-9))
        k1 = int(np.floor(hi / r + 1e-9))
        return np.arange(k0, k1 + 1) * r


@dataclass(frozen=True)
class Section:
    """One actuator along the body, starting at arc length ``start``."""

    start: float
    n_units: int
    l_0: float
    P_act: float
    side: int

    @property
    def length(self) -> float:
        return self.n_units * self.l_0

    @property
    def end(self) -> float:
        return self.start + self.length


@dataclass(frozen=True)
class ActuatorDesign:
    sections: tuple = ()

    def __post_init__(self):
        secs = tuple(self.sections)
        object.__setattr__(self, "sections", secs)
        for s in secs:
            if s.side not in (-1, 1) or s.n_units < 1 or s.l_0 <= 0 or s.P_act < 0:
                raise ValueError(f"invalid section {s}")
        for a, b in zip(secs, secs[1:]):
            if b.start < a.end - 1e-12:
                raise ValueError("sections must be ordered and non-overlapping")

    @property
    def n_curved(self) -> int:
        return sum(1 for s in self.sections if s.P_act > 0)

    @property
    def end(self) -> float:
        return self.sections[-1].end if self.sections else 0.0

    def append(self, section: Section) -> "ActuatorDesign":
        return ActuatorDesign(self.sections + (section,))

    def validate_catalog(self, catalog: DesignCatalog, tol=1e-9):
        lens = catalog.lengths
        for s in self.sections:
            if not any(abs(s.P_act - p) <= tol * max(1, p) for p in catalog.pressures):
                raise ValueError(f"pressure {s.P_act} not in catalog")
            if np.min(np.abs(lens - s.l_0)) > tol:
                raise ValueError(f"length {s.l_0} not on the catalog grid")

    # -- file format -------------------------------------------------
    def to_dict(self, **meta) -> dict:
        return {
            "format": DESIGN_FORMAT,
            "version": DESIGN_VERSION,
            "units": {"length": "mm", "pressure": "psi"},
            **meta,
            "sections": [
                {"start": round(s.start / MM, 9), "n_units": s.n_units,
                 "l0": round(s.l_0 / MM, 9), "pressure": s.P_act / PSI, "side": s.side}
                for s in self.sections
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ActuatorDesign":
        if doc.get("format") != DESIGN_FORMAT:
            raise ValueError("not a design document")
        if doc.get("version") != DESIGN_VERSION:
            raise ValueError(f"unsupported design version {doc.get('version')}")
        units = doc.get("units", {})
        lscale = {"mm": MM, "m": 1.0}[units.get("length", "mm")]
        pscale = {"psi": PSI, "Pa": 1.0, "kPa": 1e3}[units.get("pressure", "psi")]
        secs = [Section(float(s["start"]) * lscale, int(s["n_units"]),
                        float(s["l0"]) * lscale, float(s["pressure"]) * pscale,
                        int(s["side"])) for s in doc["sections"]]
        return cls(tuple(secs))

    def dumps(self, **meta) -> str:
        return json.dumps(self.to_dict(**meta), indent=2)

    @classmethod
    def loads(cls, text: str) -> "ActuatorDesign":
        return cls.from_dict(json.loads(text))


# -- Levenberg-Marquardt ------------------------------------------------

@dataclass
class LMResult:
    x: np.ndarray
    residual_norm: float
    iterations: int
    start_index: int


def _jacobian(fun, x, lo, hi, r0):
    n = len(x)
    J = np.empty((len(r0), n))
    for j in range(n):
        h = 1e-7 * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] = min(x[j] + h, hi[j])
        xm[j] = max(x[j] - h, lo[j])
        J[:, j] = (fun(xp[None])[0] - fun(xm[None])[0]) / (xp[j] - xm[j])
    return J


def lm_solve(system, bounds, starts: int = 1000, seed: int = 0, *, tol: float = 1e-6,
             damping: float = 1e-3, factor: float = 10.0, max_iter: int = 200) -> LMResult:
    """Minimize ``|system(x)|`` inside a box, returning a root.

    ``system`` maps an ``(k, n)`` array of candidates to ``(k, r)`` residuals.
    ``starts`` candidates are drawn uniformly in ``bounds`` (a sequence of
    ``(lo, hi)`` pairs); the one with the smallest residual norm (first on
    ties) seeds the damped Gauss-Newton iteration.
    """
    if starts < 1:
        raise ValueError("need at least one start")
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    rng = np.random.default_rng(seed)
    cand = lo + (hi - lo) * rng.random((starts, len(lo)))
    with np.errstate(all="ignore"):
        rc = np.asarray(system(cand), dtype=float)
    norms = np.linalg.norm(rc, axis=1)
    norms[~np.isfinite(norms)] = np.inf
    k = int(np.argmin(norms))
    if not np.isfinite(norms[k]):
        raise LMConvergenceError("no finite starting point", np.inf)
    x = cand[k].copy()
    r = rc[k].copy()
    cost = float(r @ r)
    lam = damping
    it = 0
    for it in range(1, max_iter + 1):
        if np.sqrt(cost) <= tol * 1e-3:
            break
        J = _jacobian(system, x, lo, hi, r)
        A = J.T @ J
        g = J.T @ r
        improved = False
        for _ in range(30):
            step = np.linalg.solve(A + lam * np.diag(np.maximum(np.diag(A), 1e-12)), -g)
            xn = np.clip(x + step, lo, hi)
            with np.errstate(all="ignore"):
                rn = np.asarray(system(xn[None]), dtype=float)[0]
            cn = float(rn @ rn)
            if np.isfinite(cn) and cn < cost:
                x, r, cost = xn, rn, cn
                lam = max(lam / factor, 1e-15)
                improved = True
                break
            lam *= factor
        if not improved:
            break
    res = float(np.sqrt(cost))
    if res > tol:
        raise LMConvergenceError(f"LM stalled at residual {res:.3g}", res)
    return LMResult(x, res, it, k)


M_BOUNDS = (1e-6, spam.M_MAX)
PHI_BOUNDS = (1e-6, 0.5 * np.pi - 1e-6)


def spam_system(geom: spam.SpamGeometry, eps: float, regime: str = "unsaturated"):
    """Residuals of the governing pair in the unknowns ``(m, phi_Rc)`` at a
    known strain. In the saturated regime the active length follows from the
    second equation and the amplitude is pinned to its saturation value."""
    phi_sat = spam.phi_saturated(geom)

    def fun(x):
        x = np.atleast_2d(x)
        m, phi = x[:, 0], x[:, 1]
        if regime == "unsaturated":
            r1, r2 = spam.residuals(geom, m, phi, geom.l_0, eps)
            return np.column_stack([r1, r2])
        from .special import ellip_FE
        F, _ = ellip_FE(phi, m)
        c = np.cos(phi)
        l_a = geom.R_c * F / (np.sqrt(m) * c) / (1 + geom.a_corr / (2 * m * c * c))
        r1, _ = spam.residuals(geom, m, phi, l_a, eps)
        return np.column_stack([r1, phi - phi_sat])

    return fun


def recover_state(geom: spam.SpamGeometry, eps: float, starts: int = 1000, seed: int = 0,
                  tol: float = 1e-6):
    """Stage two: ``(m, phi_Rc, saturated)`` reproducing ``eps`` at ``geom``."""
    phi_sat = spam.phi_saturated(geom)
    bounds = (M_BOUNDS, PHI_BOUNDS)
    try:
        res = lm_solve(spam_system(geom, eps, "unsaturated"), bounds, starts, seed, tol=tol)
        if res.x[1] <= phi_sat:
            return res, False
    except LMConvergenceError:
        pass
    res = lm_solve(spam_system(geom, eps, "saturated"), bounds, starts, seed, tol=tol)
    return res, True


# -- catalog tables and synthesis ----------------------------------------

@lru_cache(maxsize=32)
def catalog_table(catalog: DesignCatalog, body: beam.VineBodyParams,
                  geom: spam.SpamGeometry) -> np.ndarray:
    """Free-space equilibrium bend for every (pressure, length) catalog pair,
    shape ``(n_pressures, n_lengths)``. Zero pressure rows are zero."""
    P = np.asarray(catalog.pressures)[:, None]
    L = catalog.lengths[None, :]
    P, L = np.broadcast_arrays(P, L)
    out = beam.free_space_equilibrium(body, geom, P.ravel(), L.ravel())
    out = np.asarray(out).reshape(P.shape)
    out.setflags(write=False)
    return out


def curvature_bounds(catalog: DesignCatalog, body: beam.VineBodyParams,
                     geom: spam.SpamGeometry):
    """``(theta_min, theta_max)`` over the catalog; ``theta_min`` is the
    smallest non-zero achievable bend (0 if the catalog cannot bend)."""
    tab = catalog_table(catalog, body, geom)
    nz = tab[tab > 0]
    if nz.size == 0:
        return 0.0, 0.0
    return float(nz.min()), float(nz.max())


@dataclass
class SynthesisResult:
    P_act: float
    l_0: float
    theta: float
    theta_achieved: float
    m: float = float("nan")
    phi_Rc: float = float("nan")
    saturated: bool = False
    candidates: list = field(default_factory=list)

    @property
    def is_null(self):
        return self.P_act == 0.0


def _select(catalog, tab, theta, i_p, l_cont=None):
    """Best fabricable length for pressure row ``i_p``: the grid neighbour of
    the continuous length (or the whole grid) with the smallest bend error."""
    lens = catalog.lengths
    row = tab[i_p]
    if l_cont is None:
        j_opts = np.arange(len(lens))
    else:
        j = np.searchsorted(lens, l_cont)
        j_opts = np.unique(np.clip([j - 1, j], 0, len(lens) - 1))
    errs = np.abs(row[j_opts] - theta)
    jb = int(j_opts[np.argmin(errs)])
    return jb, float(row[jb])


def _shape_terms(geom, m, phi):
    from .special import ellip_FE
    F, E = ellip_FE(phi, m)
    sc = np.sqrt(m) * np.cos(phi)
    c2 = np.cos(phi) ** 2
    l_a = geom.R_c * F / sc / (1.0 + geom.a_corr / (2.0 * m * c2))
    return l_a, 2.0 * geom.R_c * (E - 0.5 * F) / sc


def stage_one(geom: spam.SpamGeometry, eps: float, F_req: float, P, length_range=None):
    """Continuous unit length giving force ``F_req`` at strain ``eps``.

    Fixing the force ties ``cos(phi)**2`` to ``m`` in closed form, so the
    unit length follows from the second governing equation and only the
    strain condition needs a one-dimensional root in ``m``. Each pressure can
    have one saturated and one unsaturated solution; the shortest one inside
    ``length_range`` is returned. Returns arrays ``(l_0, m, phi)``, NaN
    where a pressure cannot deliver the force.
    """
    P = np.atleast_1d(np.asarray(P, dtype=float))
    lr = (0.0, np.inf) if length_range is None else length_range
    k = P * np.pi * geom.R_c ** 2 / (2.0 * F_req)
    phi_sat = spam.phi_saturated(geom)
    c2_sat = np.cos(phi_sat) ** 2
    cand = np.full((2, 3) + P.shape, np.nan)

    # saturated: amplitude pinned, m fixed by the force alone
    m_s = k / (c2_sat + 2.0 * k)
    l_a, w = _shape_terms(geom, m_s, np.full(P.shape, phi_sat))
    l0_s = (l_a - w) / eps
    ok = (m_s <= spam.M_MAX) & (l0_s >= l_a)
    cand[0, 0, ok], cand[0, 1, ok], cand[0, 2, ok] = l0_s[ok], m_s[ok], phi_sat

    # unsaturated: l_a = l_0, m between the cos(phi)=1 and saturation limits
    lo = k / (1.0 + 2.0 * k) * (1 + 1e-12)
    hi = np.minimum(m_s, spam.M_MAX)

    def phi_of(kk, m):
        return np.arccos(np.sqrt(np.clip(kk * (1.0 - 2.0 * m) / m, 0.0, 1.0)))

    def gap(kk, m):
        la, ww = _shape_terms(geom, m, np.maximum(phi_of(kk, m), 1e-12))
        return 1.0 - ww / la - eps

    with np.errstate(all="ignore"):
        g_lo, g_hi = gap(k, lo), gap(k, hi)
    ok = np.isfinite(g_lo) & np.isfinite(g_hi) & (g_lo * g_hi <= 0) & (lo < hi)
    if np.any(ok):
        kk = k[ok]
        mr = bisect(lambda m: gap(kk, m), lo[ok], hi[ok], xtol=1e-15)
        ph = phi_of(kk, mr)
        la, _ = _shape_terms(geom, mr, ph)
        cand[1, 0, ok], cand[1, 1, ok], cand[1, 2, ok] = la, mr, ph

    l_c = cand[:, 0]
    inside = np.isfinite(l_c) & (l_c >= lr[0]) & (l_c <= lr[1])
    key = np.where(inside, l_c, np.inf)
    pick = np.argmin(key, axis=0)
    cols = np.arange(P.size)
    out = cand[pick, :, cols].T
    out[:, ~inside.any(axis=0)] = np.nan
    return out[0], out[1], out[2]


def synthesize(theta_curv: float, catalog: DesignCatalog, body: beam.VineBodyParams,
               geom: spam.SpamGeometry, *, starts: int = 1000, seed: int = 0,
               rtol: float = CURVATURE_RTOL) -> SynthesisResult:
    """Map a per-segment bend to the highest-pressure feasible catalog design."""
    theta = float(theta_curv)
    if theta == 0.0:
        return SynthesisResult(0.0, 0.0, 0.0, 0.0)
    lo_b, hi_b = curvature_bounds(catalog, body, geom)
    if not (lo_b * (1 - rtol) <= theta <= hi_b * (1 + rtol)):
        raise InfeasibleCurvatureError(
            f"theta={theta:.5g} rad outside achievable bounds [{lo_b:.5g}, {hi_b:.5g}]")
    tab = catalog_table(catalog, body, geom)
    lens = catalog.lengths
    l_lo, l_hi = lens[0], lens[-1]
    arm = beam.moment_arm(body, geom.R_act)
    eps = beam.segment_strain(body, geom.R_act, theta)
    F_req = beam.restoring_moment(body, theta) / arm

    P = np.asarray(catalog.pressures)
    rows = np.nonzero(P > 0)[0]
    l_star, _, _ = stage_one(geom, eps, F_req, P[rows], (l_lo, l_hi))
    inside = np.isfinite(l_star) & (l_star >= l_lo) & (l_star <= l_hi)
    l_cont = dict(zip(rows[inside].tolist(), l_star[inside].tolist()))

    candidates = []
    for i in sorted(rows.tolist(), key=lambda i: -P[i]):
        jb, th_r = _select(catalog, tab, theta, i, l_cont.get(i))
        ok = abs(th_r - theta) <= rtol * theta
        candidates.append((float(P[i]), float(lens[jb]), th_r, bool(ok)))
    feasible = [c for c in candidates if c[3]]
    if not feasible:
        raise InfeasibleCurvatureError(f"no catalog pair reproduces theta={theta:.5g} within {rtol:.0%}")
    P_best, l_best, th_best, _ = feasible[0]
    i_best = int(np.nonzero(P == P_best)[0][0])
    result = SynthesisResult(P_best, l_best, theta, th_best, candidates=candidates)
    if i_best in l_cont:
        # stage two at the continuous design point; the rounded design is the
        # nearest fabricable neighbour of this state
        g = geom.with_length(l_cont[i_best])
        st, sat = recover_state(g, eps, starts, seed)
        result.m, result.phi_Rc, result.saturated = float(st.x[0]), float(st.x[1]), sat
        f_req_check = P_best * spam.force_per_pressure(g.R_c, st.x[0], st.x[1])
        if abs(f_req_check - F_req) > 1e-3 * max(F_req, 1e-9):
            raise NoConvergenceError("stage-two state does not balance the target moment")
    return result


@dataclass(frozen=True)
class DesignChoice:
    theta: float
    P_act: float
    l_0: float


class DesignTable:
    """Fast synthesis over the precomputed catalog table.

    For monotone catalog rows this returns the same pair as :func:`synthesize`
    (the best grid neighbour of the continuous stage-one length); it skips the
    stage-two state recovery, which does not change the chosen design.
    """

    def __init__(self, catalog, body, geom, rtol=CURVATURE_RTOL):
        self.catalog, self.body, self.geom, self.rtol = catalog, body, geom, rtol
        self.table = catalog_table(catalog, body, geom)
        self.bounds = curvature_bounds(catalog, body, geom)

    def lookup(self, theta: float) -> DesignChoice:
        if theta == 0.0:
            return DesignChoice(0.0, 0.0, 0.0)
        P = self.catalog.pressures
        lens = self.catalog.lengths
        for i in sorted(range(len(P)), key=lambda i: -P[i]):
            if P[i] <= 0:
                continue
            jb, th = _select(self.catalog, self.table, theta, i)
            if abs(th - theta) <= self.rtol * theta:
                return DesignChoice(float(th), float(P[i]), float(lens[jb]))
        raise InfeasibleCurvatureError(f"no catalog pair reproduces theta={theta:.5g}")
