"""Quasi-static growth simulation of an actuated vine under contact.

The vine is a chain of rigid segments of length ``l_seg`` plus a growing
distal segment of length ``l_last``, parameterized by relative joint angles
(minimal coordinates, so the chain is connected by construction). Each
simulation step raises the target distal length by ``growth_rate * dt`` and
descends the cost

    w_a * sum_i (M_net,i / M_ref)^2
  + w_b * ((l_last - l_target) / g_s)^2
  + w_c * sum_p (pen_p / p_s)^2

over the joint angles and ``l_last``. ``M_net,i`` is the restoring moment
of joint ``i`` minus its actuator moment, ``pen_p`` is the penetration of a
body sample point (capsule of radius ``R_vine``) into the obstacles and
``p_s`` a penetration scale. The growth lag is normalized by the per-step
growth ``g_s = growth_rate * dt`` by default, which lets the growth drive
deflect the tip along walls it meets at an angle; set ``growth_scale`` to
override. There is no velocity or inertia.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from .beam import THETA_MAX, VineBodyParams, moment_arm
from .forcefield import ForceField, numeric_field, surrogate_field
from .scene import Circle, Scene
from .spam import SpamGeometry
from .synthesis import ActuatorDesign

TRAJ_FORMAT = "vinesim-trajectory"
TRAJ_VERSION = 1


class SimulationError(RuntimeError):
    pass


class NonFiniteStateError(SimulationError):
    pass


@dataclass(frozen=True)
class VineState:
    base: tuple = (0.0, 0.0, 0.0)
    thetas: tuple = ()
    l_last: float = 1e-3
    l_seg: float = 25e-3

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        object.__setattr__(self, "thetas", tuple(float(v) for v in self.thetas))
        object.__setattr__(self, "l_last", float(self.l_last))
        if not all(math.isfinite(t) for t in self.thetas) or not math.isfinite(self.l_last):
            raise NonFiniteStateError("state contains non-finite values")
        if any(abs(t) > THETA_MAX + 1e-12 for t in self.thetas):
            raise ValueError("joint angle beyond +-pi/2")
        if not (0.0 < self.l_last <= self.l_seg + 1e-12):
            raise ValueError(f"l_last={self.l_last} outside (0, l_seg]")

    @property
    def n_joints(self):
        return len(self.thetas)

    @property
    def grown_length(self):
        return len(self.thetas) * self.l_seg + self.l_last


@dataclass(frozen=True)
class SimParams:
    w_a: float = 160.0
    w_b: float = 15.0
    w_c: float = 1.0
    n_steps: int = 50
    alpha: float = 0.01
    growth_rate: float = 0.02
    dt: float = 0.1
    penetration_scale: float = 1e-4
    l_min: float = 1e-4
    growth_scale: float | None = None
    rtol: float = 1e-7  # descent stops once a step lowers the cost by less
    body: VineBodyParams = field(default_factory=VineBodyParams)
    geom: SpamGeometry = field(default_factory=SpamGeometry)

    def __post_init__(self):
        if min(self.w_a, self.w_b, self.w_c) <= 0:
            raise ValueError("cost weights must be positive")
        if self.n_steps < 1 or self.alpha <= 0:
            raise ValueError("need n_steps >= 1 and alpha > 0")
        if self.growth_rate < 0 or self.dt <= 0:
            raise ValueError("growth must be non-negative and dt positive")
        if not self.rtol >= 0:
            raise ValueError("rtol must be non-negative")
        if self.growth_scale is not None and self.growth_scale <= 0:
            raise ValueError("growth_scale must be positive")

    def packed(self) -> np.ndarray:
        b = self.body
        p = np.empty(K.N_PARAMS)
        p[K.P_WA], p[K.P_WB], p[K.P_WC] = self.w_a, self.w_b, self.w_c
        p[K.P_ALPHA], p[K.P_NDESC] = self.alpha, self.n_steps
        p[K.P_GROW] = self.growth_rate * self.dt
        p[K.P_LSEG], p[K.P_RVINE], p[K.P_MREF] = b.l_seg, b.R_vine, b.moment_scale
        p[K.P_EC], p[K.P_ARM] = b.eps_critical, moment_arm(b, self.geom.R_act)
        p[K.P_PS], p[K.P_THMAX], p[K.P_LMIN] = self.penetration_scale, THETA_MAX, self.l_min
        p[K.P_GSCALE] = self.growth_norm
        p[K.P_RTOL] = self.rtol
        return p

    @property
    def growth_norm(self) -> float:
        if self.growth_scale is not None:
            return self.growth_scale
        g = self.growth_rate * self.dt
        return g if g > 0 else self.body.l_seg

    def steps_for(self, duration: float) -> int:
        return int(round(duration / self.dt))


def initial_state(scene_or_base, params: SimParams | None = None, l_last=1e-3) -> VineState:
    base = scene_or_base.start if isinstance(scene_or_base, Scene) else scene_or_base
    ls = (params or SimParams()).body.l_seg
    return VineState(base, (), l_last, ls)


def resolve_field(model, params: SimParams) -> ForceField:
    """Force field for ``model``: a ForceField, a trained surrogate, or None
    for the full actuator model."""
    if model is None:
        return numeric_field(params.geom)
    if isinstance(model, ForceField):
        return model
    return surrogate_field(model)


# -- packing helpers ----------------------------------------------------

def pack_scenes(scenes):
    circ, c_off, verts, voff, aabb, q_off = [], [0], [], [0], [], [0]
    for sc in scenes:
        for o in sc.obstacles:
            if isinstance(o, Circle):
                circ.append((*o.center, o.radius))
            else:
                verts.extend(o.vertices)
                voff.append(len(verts))
                aabb.append(o.aabb())
        c_off.append(len(circ))
        q_off.append(len(aabb))
    return (np.asarray(circ, float).reshape(-1, 3), np.asarray(c_off, np.int64),
            np.asarray(verts, float).reshape(-1, 2), np.asarray(voff, np.int64),
            np.asarray(aabb, float).reshape(-1, 4), np.asarray(q_off, np.int64))


def joint_actuation(design: ActuatorDesign, n_joints: int, l_seg: float, ff: ForceField):
    """Per-joint pressure, side and force-table row/weight. A joint at arc
    length ``(i + 1) l_seg`` is actuated iff it lies in ``[start, end)`` of
    a section."""
    P = np.zeros(n_joints)
    side = np.ones(n_joints)
    row = np.zeros(n_joints, np.int64)
    w = np.zeros(n_joints)
    s_j = (np.arange(n_joints) + 1) * l_seg
    for sec in design.sections:
        if sec.P_act <= 0:
            continue
        i, wt = ff.row_weight(sec.l_0)
        hit = (s_j >= sec.start - 1e-12) & (s_j < sec.end - 1e-12)
        P[hit], side[hit], row[hit], w[hit] = sec.P_act, sec.side, i, wt
    return P, side, row, w


# -- single-state API -------------------------------------------------------

def forward_kinematics(state: VineState):
    """Joint positions (``n + 2`` points, base first, tip last) and segment
    headings (``n + 1``)."""
    n = state.n_joints
    th = np.asarray(state.thetas, float)
    Jx, Jy = np.empty(n + 2), np.empty(n + 2)
    ux, uy = np.empty(n + 1), np.empty(n + 1)
    K.forward(np.asarray(state.base, float), th, n, state.l_last, state.l_seg, Jx, Jy, ux, uy)
    heads = state.base[2] + np.concatenate([[0.0], np.cumsum(th)])
    return np.column_stack([Jx, Jy]), heads


def tip_pose(state: VineState):
    pts, heads = forward_kinematics(state)
    return float(pts[-1, 0]), float(pts[-1, 1]), float(heads[-1])


@dataclass
class CostReport:
    cost: float
    grad: np.ndarray
    moment: float
    growth: float
    contact: float
    n_contacts: int
    max_penetration: float


def _single_args(state, scene, design, params, model):
    ff = resolve_field(model, params)
    n = state.n_joints
    jP, js, jr, jw = joint_actuation(design, max(n, 1), params.body.l_seg, ff)
    pk = pack_scenes([scene])
    return ff, (jP, js, jr, jw), pk


def cost(state: VineState, scene: Scene, design: ActuatorDesign, params: SimParams,
         l_target: float, model=None) -> CostReport:
    """Step cost at ``state`` and its gradient w.r.t. ``(thetas, l_last)``."""
    ff, (jP, js, jr, jw), (circ, c_off, verts, voff, aabb, q_off) = \
        _single_args(state, scene, design, params, model)
    n = state.n_joints
    th = np.asarray(state.thetas, float)
    grad = np.empty(n + 1)
    dmom = np.empty(n + 1)
    rows = np.empty((K.K_MAX, n + 2))
    pen = np.empty(K.K_MAX)
    Jx, Jy, ux, uy = np.empty(n + 2), np.empty(n + 2), np.empty(n + 1), np.empty(n + 1)
    c, _, ntot, pmax, cm, cg, cc = K.evaluate(
        th, n, state.l_last, l_target, np.asarray(state.base, float), jP, js, jr, jw,
        ff.f, ff.df, ff.eps_max, params.packed(), circ, 0, c_off[1], verts, voff, aabb, 0,
        q_off[1], True, grad, dmom, rows, pen, Jx, Jy, ux, uy)
    return CostReport(c, grad, cm, cg, cc, ntot, pmax)


def descend(state: VineState, scene: Scene, design: ActuatorDesign, params: SimParams,
            l_target: float, model=None):
    """Run the descent of one step without spawning joints. Returns the
    relaxed ``(thetas, l_last)`` and the cost after each update."""
    ff, (jP, js, jr, jw), (circ, c_off, verts, voff, aabb, q_off) = \
        _single_args(state, scene, design, params, model)
    th = np.asarray(state.thetas, float).copy()
    hist = np.empty(params.n_steps + 1)
    l_new = K.descend(th, state.n_joints, state.l_last, l_target,
                      np.asarray(state.base, float), jP, js, jr, jw, ff.f, ff.df,
                      ff.eps_max, params.packed(), circ, 0, c_off[1], verts, voff, aabb, 0,
                      q_off[1], hist)
    return th, l_new, hist


def step(state: VineState, scene: Scene, design: ActuatorDesign, params: SimParams,
         model=None) -> VineState:
    """One simulation step: grow the target, relax, spawn a joint if the
    distal segment exceeds ``l_seg``."""
    tr = rollout_batch([state], [scene], [design], [params.dt], params, model)[0]
    if tr.error:
        raise tr.exception()
    return tr.final


# -- batched rollouts -----------------------------------------------------

@dataclass
class Trajectory:
    tips: np.ndarray  # (steps + 1, 3) tip pose after each step
    final: VineState | None
    steps: int
    dt: float
    status: int
    reached: bool  # tip entered the goal disk at some step
    error: str = ""

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt

    def exception(self):
        return NonFiniteStateError(self.error) if self.status == K.ST_NONFINITE \
            else SimulationError(self.error)

    def to_dict(self, **meta):
        st = self.final
        return {
            "format": TRAJ_FORMAT, "version": TRAJ_VERSION,
            "units": {"length": "m", "angle": "rad", "time": "s"},
            **meta,
            "dt": self.dt, "steps": self.steps, "status": self.status,
            "reached": bool(self.reached), "error": self.error,
            "tip_path": [[t, *map(float, p)] for t, p in zip(self.times.tolist(),
                                                               self.tips[: self.steps + 1])],
            "final_state": None if st is None else {
                "base": list(st.base), "thetas": list(st.thetas), "l_last": st.l_last,
                "grown_length": st.grown_length},
        }

    def dumps(self, **meta):
        return json.dumps(self.to_dict(**meta), indent=1)


_STATUS_TEXT = {K.ST_NONFINITE: "non-finite state", K.ST_CAPACITY: "joint capacity exceeded",
                K.ST_OUT_OF_BOUNDS: "tip left the workspace"}


def rollout_batch(initial, scenes, designs, durations, params: SimParams, model=None, *,
                  stop_on_goal=False, stop_out_of_bounds=False, stop_on_stall=False):
    """Independent rollouts, element ``b`` from ``initial[b]`` in
    ``scenes[b]`` with ``designs[b]`` for ``durations[b]`` seconds.

    Results are identical to running each element alone. A failing element
    reports its error in its own trajectory without affecting the others.
    Optional early stops: on entering the goal, on leaving the bounds (an
    error status), and on stalling, when growth over the last ten steps falls
    below a tenth of nominal.
    """
    B = len(initial)
    if not (len(scenes) == len(designs) == len(durations) == B):
        raise ValueError("batch lists must have equal length")
    if B == 0:
        return []
    ff = resolve_field(model, params)
    prm = params.packed()
    ls = params.body.l_seg
    n_sim = np.array([params.steps_for(d) for d in durations], np.int64)
    n0 = np.array([s.n_joints for s in initial], np.int64)
    grow = params.growth_rate * params.dt
    cap = int(np.max(n0 + np.ceil(n_sim * grow / ls)) + 3)
    th = np.zeros((B, cap))
    for b, s in enumerate(initial):
        th[b, : s.n_joints] = s.thetas
    jP, js, jr, jw = (np.empty((B, cap)), np.empty((B, cap)), np.empty((B, cap), np.int64),
                      np.empty((B, cap)))
    for b, d in enumerate(designs):
        jP[b], js[b], jr[b], jw[b] = joint_actuation(d, cap, ls, ff)
    base = np.array([s.base for s in initial], float)
    l0 = np.array([s.l_last for s in initial], float)
    circ, c_off, verts, voff, aabb, q_off = pack_scenes(scenes)
    goal = np.array([sc.goal for sc in scenes], float)
    bounds = np.array([sc.bounds for sc in scenes], float)
    flags = np.array([bool(stop_on_goal), bool(stop_out_of_bounds), bool(stop_on_stall)])
    th_out = np.zeros((B, cap))
    n_out = np.zeros(B, np.int64)
    l_out = np.zeros(B)
    tips = np.zeros((B, int(n_sim.max()) + 1, 3))
    done = np.zeros(B, np.int64)
    status = np.zeros(B, np.int64)
    reached = np.zeros(B, np.bool_)
    K.rollout_kernel(base, th, n0, l0, jP, js, jr, jw, n_sim, ff.f, ff.df, ff.eps_max, prm,
                     circ, c_off, verts, voff, aabb, q_off, goal, bounds, flags,
                     th_out, n_out, l_out, tips, done, status, reached)
    out = []
    for b in range(B):
        st = int(status[b])
        final = None
        if st != K.ST_NONFINITE:
            final = VineState(tuple(base[b]), tuple(th_out[b, : n_out[b]]), float(l_out[b]), ls)
        out.append(Trajectory(tips[b, : done[b] + 1].copy(), final, int(done[b]), params.dt,
                              st, bool(reached[b]), _STATUS_TEXT.get(st, "")))
    return out


def simulate(scene: Scene, design: ActuatorDesign, duration: float, params: SimParams,
             model=None, state: VineState | None = None, stop_on_goal=False) -> Trajectory:
    """Roll out one design from the scene's start pose."""
    s0 = state or initial_state(scene, params)
    return rollout_batch([s0], [scene], [design], [duration], params, model,
                         stop_on_goal=stop_on_goal)[0]
