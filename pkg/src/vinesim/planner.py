"""Design optimization as kinodynamic planning.

A forward SST* tree grows vines from the start pose. Each edge either
continues growing with the current design ("straight") or appends a new
actuator section synthesized for a sampled per-segment bend, then rolls the
simulator forward for a sampled duration. Node cost is the number of curved
sections plus the grown length over a reference length, so the planner
minimizes actuator count with length as the tie-break.

An optional goal-rooted RRT* over biarcs supplies cost-to-go estimates that
order the best-near selection.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import simulator as sim
from .beam import VineBodyParams
from .biarc import biarc, wrap
from .scene import Scene
from .synthesis import ActuatorDesign, DesignCatalog, DesignTable, Section


class PlannerError(RuntimeError):
    pass


class InfeasibleSceneError(PlannerError):
    pass


class EmptyTreeError(PlannerError):
    pass


def pose_distance(a, b, R):
    """Tip-pose metric: Euclidean in position plus heading difference
    scaled by the vine radius. ``a`` is ``(..., 3)``, ``b`` a single pose."""
    a = np.asarray(a, dtype=float)
    dx = a[..., 0] - b[0]
    dy = a[..., 1] - b[1]
    dh = (a[..., 2] - b[2] + np.pi) % (2 * np.pi) - np.pi
    return np.sqrt(dx * dx + dy * dy + (R * dh) ** 2)


@dataclass(frozen=True)
class PlannerParams:
    selection_radius: float | None = None  # delta_BN, default 8% of diagonal
    witness_radius: float | None = None  # delta_s, default 3% of diagonal
    goal_bias: float = 0.1
    iteration_budget: int = 200
    time_budget: float = 120.0
    epsilon: float = 0.0
    length_norm: float | None = None  # L_ref, default workspace diagonal
    heuristic_enabled: bool = True
    batch_size: int = 64
    p_straight: float = 0.7
    duration_range: tuple = (0.5, 3.0)
    epoch_iterations: int = 16
    stop_at_first: bool = False
    refine_iterations: int = 0  # extra iterations kept after the first solution
    reverse_nodes: int = 600
    reverse_budget: float = 30.0
    coverage_fraction: float = 0.1
    max_section_length: float | None = None  # default half the diagonal

    def __post_init__(self):
        if not 0.0 <= self.goal_bias <= 1.0 or not 0.0 <= self.p_straight <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if (self.selection_radius is not None and self.witness_radius is not None
                and not self.witness_radius < self.selection_radius):
            raise ValueError("witness radius must be smaller than the selection radius")
        if self.iteration_budget < 1 or self.batch_size < 1:
            raise ValueError("budgets must be positive")

    def radii(self, scene: Scene):
        d = scene.diagonal
        bn = 0.08 * d if self.selection_radius is None else self.selection_radius
        ws = 0.03 * d if self.witness_radius is None else self.witness_radius
        if not ws < bn:
            raise ValueError("witness radius must be smaller than the selection radius")
        return bn, ws

    def l_ref(self, scene: Scene):
        return scene.diagonal if self.length_norm is None else self.length_norm


@dataclass
class PlanNode:
    tip_pose: tuple
    vine: sim.VineState
    design_prefix: ActuatorDesign
    cost_to_come: float
    parent: "PlanNode | None" = None
    edge: tuple | None = None  # (theta_curv or None, side, steps)
    tips: np.ndarray | None = None  # tip path of the incoming edge
    index: int = 0
    active: bool = True
    children: int = 0
    at_goal: bool = False

    def path(self):
        out = []
        n = self
        while n is not None:
            out.append(n)
            n = n.parent
        return out[::-1]


# -- reverse geometric tree -------------------------------------------------

@dataclass
class ReverseTree:
    poses: np.ndarray  # (n, 3)
    cost: np.ndarray  # cost-to-go
    parent: np.ndarray
    edges: list  # edges[i] = biarc from node i to its parent (None at roots)
    n_roots: int
    l_ref: float
    kappa_max: float
    kappa_min: float

    @property
    def size(self):
        return len(self.cost)

    def query(self, pose, radius, R):
        """Cost-to-go of the nearest node within ``radius`` (inf if none)."""
        d = pose_distance(self.poses, pose, R)
        i = int(np.argmin(d))
        return float(self.cost[i]) if d[i] <= radius else math.inf


def _edge_cost(b, kappa_min, l_ref):
    curved = sum(1 for a in b.arcs if abs(a.kappa) >= kappa_min and a.length > 0)
    return curved + b.length / l_ref


def _clear(scene, pts, R):
    x0, y0, x1, y1 = scene.bounds
    if np.any(pts[:, 0] < x0) or np.any(pts[:, 0] > x1) or np.any(pts[:, 1] < y0) \
            or np.any(pts[:, 1] > y1):
        return False
    return bool(np.all(scene.min_sdf(pts) >= R))


def _best_biarc(p_from, p_to, kappa_max, ratios=(0.5, 1.0, 2.0)):
    best = None
    for r in ratios:
        b = biarc(p_from, p_to, r)
        if b is None or any(abs(a.kappa) > kappa_max for a in b.arcs):
            continue
        if best is None or b.length < best.length:
            best = b
    return best


def build_reverse_tree(scene: Scene, bounds, budget: float, seed: int, *, body=None,
                       max_nodes: int = 600, n_roots: int = 8, step: float | None = None,
                       l_ref: float | None = None, heading_noise: float = 0.1) -> ReverseTree:
    """Goal-rooted RRT* whose edges are collision-free biarcs.

    Edges run in the vine's direction of travel, from a node towards its
    parent and ultimately into the goal. Arc curvatures are limited to the
    catalog's maximum per-segment bend; arcs below the minimum achievable
    bend count as straight growth. Growth stops after ``max_nodes`` samples
    or ``budget`` seconds, whichever comes first.
    """
    body = body or VineBodyParams()
    th_min, th_max = bounds
    kmax = th_max / body.l_seg
    kmin = th_min / body.l_seg
    R = body.R_vine
    L = scene.diagonal if l_ref is None else l_ref
    step = step or 0.15 * scene.diagonal
    rng = np.random.default_rng(seed)
    gx, gy, _ = scene.goal
    poses = [(gx, gy, wrap(2 * np.pi * k / n_roots)) for k in range(n_roots)]
    cost = [0.0] * n_roots
    parent = [-1] * n_roots
    edges = [None] * n_roots
    children = [[] for _ in range(n_roots)]
    x0, y0, x1, y1 = scene.bounds
    t0 = time.perf_counter()
    ds = 0.25 * R
    for _ in range(max_nodes):
        if time.perf_counter() - t0 > budget:
            break
        q = (rng.uniform(x0, x1), rng.uniform(y0, y1), 0.0)
        P = np.asarray(poses)
        d = np.hypot(P[:, 0] - q[0], P[:, 1] - q[1])
        near_i = int(np.argmin(d))
        pn = P[near_i]
        # among equally near nodes (the roots share a position) prefer the
        # one whose heading points away from the sample
        back = math.atan2(pn[1] - q[1], pn[0] - q[0])
        tied = np.nonzero(np.hypot(P[:, 0] - pn[0], P[:, 1] - pn[1]) <= 1e-12)[0]
        turn = np.abs((P[tied, 2] - back + np.pi) % (2 * np.pi) - np.pi)
        pn = P[tied[int(np.argmin(turn))]]
        # steer: place q within ``step`` behind the node, inside the cone from
        # which a single arc of curvature <= kmax arrives with its heading
        dist = min(step, math.hypot(q[0] - pn[0], q[1] - pn[1]))
        if dist < 1e-9:
            continue
        dmax = 0.9 * math.asin(min(1.0, 0.5 * kmax * dist))
        dev = wrap(math.atan2(pn[1] - q[1], pn[0] - q[0]) - pn[2])
        chord = pn[2] + min(max(dev, -dmax), dmax)
        qx, qy = pn[0] - dist * math.cos(chord), pn[1] - dist * math.sin(chord)
        aim = wrap(2.0 * chord - pn[2])
        q = (qx, qy, wrap(aim + heading_noise * rng.standard_normal()))
        if scene.min_sdf([q[:2]])[0] < R or not scene.contains(q[0], q[1]):
            continue
        # choose the cheapest collision-free parent among neighbours
        rad = 1.5 * step
        cand = np.nonzero(pose_distance(P, q, R) <= rad)[0]
        best, best_c, best_b = -1, math.inf, None
        cost_np = np.asarray(cost)
        for j in cand[np.argsort(cost_np[cand], kind="stable")]:
            if cost_np[j] >= best_c:
                break
            b = _best_biarc(q, tuple(P[j]), kmax)
            if b is None:
                continue
            c = cost_np[j] + _edge_cost(b, kmin, L)
            if c < best_c and _clear(scene, b.sample(ds), R):
                best, best_c, best_b = int(j), c, b
        if best < 0:
            continue
        k = len(poses)
        poses.append(q)
        cost.append(best_c)
        parent.append(best)
        edges.append(best_b)
        children.append([])
        children[best].append(k)
        # rewire: neighbours may reach the goal more cheaply through q
        for j in cand:
            j = int(j)
            if j < n_roots:
                continue
            b = _best_biarc(tuple(P[j]), q, kmax)
            if b is None:
                continue
            c = best_c + _edge_cost(b, kmin, L)
            if c + 1e-12 < cost[j] and _clear(scene, b.sample(ds), R):
                children[parent[j]].remove(j)
                parent[j], edges[j] = k, b
                children[k].append(j)
                delta = c - cost[j]
                stack = [j]
                while stack:
                    u = stack.pop()
                    cost[u] += delta
                    stack.extend(children[u])
    if len(poses) == n_roots:
        raise EmptyTreeError("no collision-free biarc leaves the goal")
    return ReverseTree(np.asarray(poses), np.asarray(cost), np.asarray(parent), edges,
                       n_roots, L, kmax, kmin)


def cost_to_go(pose, tree: ReverseTree | None, scene: Scene, radius: float, R: float,
               l_ref: float) -> float:
    """Reverse-tree estimate of the remaining cost from ``pose``: the cost of
    the nearest tree node within ``radius``, else the straight-line distance
    to the goal over ``l_ref``. Infinite without a tree."""
    if tree is None:
        return math.inf
    h = tree.query(pose, radius, R)
    if math.isinf(h):
        h = math.hypot(pose[0] - scene.goal[0], pose[1] - scene.goal[1]) / l_ref
    return h


def heuristic_cost(node: PlanNode, tree: ReverseTree | None, scene: Scene,
                   params: PlannerParams, R: float | None = None) -> float:
    """Cost-to-come of ``node`` plus the reverse-tree cost-to-go."""
    R = VineBodyParams().R_vine if R is None else R
    radius = params.coverage_fraction * scene.diagonal
    return node.cost_to_come + cost_to_go(node.tip_pose, tree, scene, radius, R,
                                          params.l_ref(scene))


# -- forward planner ------------------------------------------------------

@dataclass
class PlanResult:
    success: bool
    design: ActuatorDesign | None
    best_cost: float
    solution: list  # nodes from root to goal
    stats: dict
    nodes: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    reverse_tree: ReverseTree | None = None

    @property
    def tip_path(self):
        """Concatenated tip path along the solution (first pose included)."""
        if not self.solution:
            return np.zeros((0, 3))
        parts = [self.solution[0].tips[:1]]
        parts += [n.tips[1:] for n in self.solution[1:]]
        return np.concatenate(parts)

    @property
    def durations(self):
        return [n.edge[2] for n in self.solution[1:]]

    @property
    def total_steps(self):
        return int(sum(self.durations))


class _Store:
    """Growable arrays of node poses and costs for vectorized queries."""

    def __init__(self):
        self.poses = np.zeros((256, 3))
        self.cost = np.zeros(256)
        self.h = np.zeros(256)
        self.active = np.zeros(256, dtype=bool)
        self.n = 0

    def add(self, pose, cost, h):
        if self.n == len(self.cost):
            for name in ("poses", "cost", "h", "active"):
                a = getattr(self, name)
                setattr(self, name, np.concatenate([a, np.zeros_like(a)]))
        i = self.n
        self.poses[i], self.cost[i], self.h[i], self.active[i] = pose, cost, h, True
        self.n += 1
        return i


def _section_for(node: PlanNode, theta_curv, side, span, table: DesignTable):
    choice = table.lookup(theta_curv)
    start = max(node.vine.grown_length, node.design_prefix.end)
    n_units = max(1, int(round(span / choice.l_0)))
    return Section(start, n_units, choice.l_0, choice.P_act, side)


def plan(scene: Scene, catalog: DesignCatalog, params: PlannerParams, seed: int, *,
         sim_params: sim.SimParams | None = None, model=None,
         reverse_tree: ReverseTree | None = None, progress=None) -> PlanResult:
    """Search for a minimum-actuator design that grows the vine into the goal."""
    t_start = time.perf_counter()
    sp = sim_params or sim.SimParams()
    body, geom = sp.body, sp.geom
    R = body.R_vine
    if scene.min_sdf([scene.start[:2]])[0] < R:
        raise InfeasibleSceneError("start pose is within one vine radius of an obstacle")
    table = DesignTable(catalog, body, geom)
    th_lo, th_hi = table.bounds
    if th_hi <= 0:
        raise InfeasibleSceneError("catalog cannot bend the vine")
    d_bn, d_s = params.radii(scene)
    L_ref = params.l_ref(scene)
    rng = np.random.default_rng(seed)
    tree = reverse_tree
    h_radius = params.coverage_fraction * scene.diagonal
    if params.heuristic_enabled and tree is None:
        try:
            tree = build_reverse_tree(scene, (th_lo, th_hi), params.reverse_budget,
                                      seed, body=body, max_nodes=params.reverse_nodes,
                                      l_ref=L_ref)
        except EmptyTreeError:
            tree = None
    t_tree = time.perf_counter() - t_start

    def heuristic(pose):
        if not params.heuristic_enabled:
            return 0.0
        return cost_to_go(pose, tree, scene, h_radius, R, L_ref)

    s0 = sim.initial_state(scene, sp)
    tip0 = sim.tip_pose(s0)
    root = PlanNode(tip0, s0, ActuatorDesign(), 0.0, tips=np.asarray([tip0]))
    nodes = [root]
    store = _Store()
    store.add(tip0, 0.0, heuristic(tip0))
    stored = [root]  # node behind each store row (goal nodes are not stored)
    solutions = []
    best = None
    history = []
    stats = {"iterations": 0, "rollouts": 0, "inserted": 0, "pruned": 0,
             "solve_time": None, "first_solution_iteration": None, "reverse_tree_time": t_tree,
             "reverse_tree_nodes": 0 if tree is None else int(tree.size)}
    x0, y0, x1, y1 = scene.bounds
    gx, gy, _ = scene.goal
    span_max = (0.5 * scene.diagonal if params.max_section_length is None
                else params.max_section_length)
    lo_steps = sp.steps_for(params.duration_range[0])
    hi_steps = sp.steps_for(params.duration_range[1])
    span_steps = int(span_max / (sp.growth_rate * sp.dt))
    iter_times = []
    epoch, epoch_left = 0, params.epoch_iterations
    budget_hit = False

    for it in range(params.iteration_budget):
        if time.perf_counter() - t_start > params.time_budget:
            budget_hit = True
            break
        ti = time.perf_counter()
        batch = []
        act = np.nonzero(store.active[: store.n])[0]
        if act.size == 0:
            break
        for _ in range(params.batch_size):
            if rng.random() < params.goal_bias:
                q = (gx, gy, rng.uniform(-np.pi, np.pi))
            else:
                q = (rng.uniform(x0, x1), rng.uniform(y0, y1), rng.uniform(-np.pi, np.pi))
            d = pose_distance(store.poses[act], q, R)
            near = act[d <= d_bn]
            if near.size:
                key = store.cost[near] + (store.h[near] if params.heuristic_enabled else 0.0)
                sel = int(near[np.argmin(key)])
            else:
                sel = int(act[np.argmin(d)])
            steps = int(rng.integers(lo_steps, hi_steps + 1))
            if rng.random() < params.p_straight:
                # straight runs may be as long as a section so that the
                # trivial design is within reach of a few edges
                if rng.random() < 0.5:
                    steps = int(rng.integers(lo_steps, max(lo_steps, span_steps) + 1))
                edge = (None, 0, steps, 0.0)
            else:
                theta = float(rng.uniform(th_lo, th_hi))
                side = 1 if rng.random() < 0.5 else -1
                growth = sp.growth_rate * sp.dt * steps
                span = float(rng.uniform(growth, max(growth, span_max)))
                edge = (theta, side, steps, span)
            batch.append((stored[sel], edge))
        designs = []
        grow_step = sp.growth_rate * sp.dt
        for b, (node, (theta, side, steps, span)) in enumerate(batch):
            if theta is None:
                designs.append(node.design_prefix)
                continue
            sec = _section_for(node, theta, side, span, table)
            designs.append(node.design_prefix.append(sec))
            # a curved edge grows through its whole section, so a node never
            # carries actuation that has not yet shaped its tip pose
            need = int(math.ceil((sec.end - node.vine.grown_length) / grow_step - 1e-9))
            if need > steps:
                batch[b] = (node, (theta, side, need, span))
        trs = sim.rollout_batch([n.vine for n, _ in batch], [scene] * len(batch), designs,
                                [e[2] * sp.dt for _, e in batch], sp, model,
                                stop_on_goal=True, stop_out_of_bounds=True, stop_on_stall=True)
        stats["rollouts"] += len(batch)
        for (node, edge), des, tr in zip(batch, designs, trs):
            if tr.status != 0 or tr.final is None or tr.steps == 0:
                continue
            tip = tuple(float(v) for v in tr.tips[-1])
            cost = des.n_curved + tr.final.grown_length / L_ref
            new = PlanNode(tip, tr.final, des, cost, node, (edge[0], edge[1], tr.steps),
                           tr.tips, len(nodes), at_goal=tr.reached)
            if tr.reached:
                nodes.append(new)
                node.children += 1
                solutions.append(new)
                if best is None or cost < best.cost_to_come:
                    best = new
                    history.append((it, cost))
                    # cost-to-come never decreases along an edge, so nodes
                    # at or above the incumbent cannot lead to a better one
                    n_act = store.n
                    dead = np.nonzero(store.active[:n_act] & (store.cost[:n_act] >= cost))[0]
                    for j in dead:
                        store.active[j] = False
                        stored[j].active = False
                    if stats["solve_time"] is None:
                        stats["solve_time"] = time.perf_counter() - t_start
                        stats["first_solution_iteration"] = it
                continue
            if best is not None and cost >= best.cost_to_come:
                continue
            act = np.nonzero(store.active[: store.n])[0]
            d = pose_distance(store.poses[act], tip, R)
            close = act[d < d_s]
            if close.size and np.min(store.cost[close]) <= cost + params.epsilon:
                continue
            for j in close:
                store.active[j] = False
                stored[j].active = False
                stats["pruned"] += 1
            nodes.append(new)
            node.children += 1
            store.add(tip, cost, heuristic(tip))
            stored.append(new)
            stats["inserted"] += 1
        iter_times.append(time.perf_counter() - ti)
        stats["iterations"] = it + 1
        if progress is not None:
            progress(it, best)
        if (best is not None and params.stop_at_first
                and it - stats["first_solution_iteration"] >= params.refine_iterations):
            break
        epoch_left -= 1
        if epoch_left == 0:
            epoch += 1
            epoch_left = params.epoch_iterations * 2 ** epoch
            d_bn *= 0.5
            d_s *= 0.5
    stats["iter_time"] = float(np.mean(iter_times)) if iter_times else 0.0
    stats["total_time"] = time.perf_counter() - t_start
    stats["best_cost"] = None if best is None else float(best.cost_to_come)
    stats["cost_history"] = history
    stats["budget_exhausted"] = budget_hit or best is None
    stats["epochs"] = epoch
    stats["nodes"] = len(nodes)
    if best is None:
        return PlanResult(False, None, math.inf, [], stats, nodes, solutions, tree)
    return PlanResult(True, best.design_prefix, float(best.cost_to_come), best.path(), stats,
                      nodes, solutions, tree)


def replay(scene: Scene, result: PlanResult, sim_params: sim.SimParams | None = None,
           model=None) -> sim.Trajectory:
    """Re-simulate a plan's design from scratch for its total duration."""
    sp = sim_params or sim.SimParams()
    return sim.simulate(scene, result.design, result.total_steps * sp.dt, sp, model,
                        stop_on_goal=True)
