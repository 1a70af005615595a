"""Monte-Carlo robustness of a design under scene and actuation noise.

Two axes are swept. On the obstacle axis a level ``L`` perturbs obstacle
sizes by ``L`` percent and positions by ``L`` millimetres (standard
deviations). On the actuation axis it perturbs section pressures and unit
lengths by ``L`` percent. Each cell rolls out the design in independently
perturbed copies of the scene and records the fraction reaching the goal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import simulator as sim
from .scene import Perturbation, Scene, perturb
from .synthesis import ActuatorDesign

DEFAULT_LEVELS = (0.0, 2.5, 5.0, 7.5, 10.0)


@dataclass
class RobustnessGrid:
    obstacle_levels: tuple
    actuation_levels: tuple
    trials: int
    seed: int
    duration: float
    successes: np.ndarray  # (n_obstacle, n_actuation) counts
    rejected: np.ndarray
    failures: np.ndarray  # rollouts ending in a simulator error
    meta: dict = field(default_factory=dict)

    @property
    def rates(self) -> np.ndarray:
        return self.successes / self.trials

    def stderr(self) -> np.ndarray:
        p = self.rates
        return np.sqrt(np.maximum(p * (1 - p), 0.0) / self.trials)

    def monotone_violations(self, n_sigma: float = 2.0):
        """Adjacent cells where the rate rises by more than ``n_sigma``
        combined standard errors as either uncertainty level increases."""
        r, se = self.rates, self.stderr()
        bad = []
        for axis in (0, 1):
            lo = [slice(None)] * 2
            hi = [slice(None)] * 2
            lo[axis], hi[axis] = slice(None, -1), slice(1, None)
            rise = r[tuple(hi)] - r[tuple(lo)]
            band = n_sigma * np.hypot(se[tuple(hi)], se[tuple(lo)])
            for idx in zip(*np.nonzero(rise > band + 1e-12)):
                i, j = int(idx[0]), int(idx[1])
                bad.append((axis, i, j, float(rise[i, j])))
        return bad

    def to_dict(self):
        return {
            "format": "vinesim-robustness", "version": 1,
            "obstacle_axis": "size percent and position mm (std dev)",
            "actuation_axis": "pressure and length percent (std dev)",
            "obstacle_levels": list(self.obstacle_levels),
            "actuation_levels": list(self.actuation_levels),
            "trials": self.trials, "seed": self.seed, "duration_s": self.duration,
            "success_rate": self.rates.tolist(),
            "successes": self.successes.tolist(),
            "rejected_draws": self.rejected.tolist(),
            "simulation_failures": self.failures.tolist(),
            **self.meta,
        }


def trial_seed(seed: int, i: int, j: int, t: int) -> int:
    return int(np.random.SeedSequence([seed, i, j, t]).generate_state(1, np.uint64)[0])


def nominal_duration(scene: Scene, design: ActuatorDesign, params: sim.SimParams,
                     model=None, horizon: float | None = None, margin: float = 1.25):
    """Time the unperturbed design needs to reach the goal, times ``margin``.
    Returns ``(duration, reached)``; without a goal hit the horizon is used."""
    if horizon is None:
        horizon = 2.0 * scene.diagonal / params.growth_rate
    tr = sim.simulate(scene, design, horizon, params, model, stop_on_goal=True)
    if not tr.reached:
        return horizon, False
    return max(params.dt, margin * tr.steps * params.dt), True


def robustness_grid(scene: Scene, design: ActuatorDesign, *, obstacle_levels=DEFAULT_LEVELS,
                    actuation_levels=DEFAULT_LEVELS, trials: int = 1000, seed: int = 0,
                    params: sim.SimParams | None = None, model=None,
                    duration: float | None = None, batch: int = 250,
                    progress=None) -> RobustnessGrid:
    """Success counts over ``trials`` perturbed rollouts per grid cell."""
    if trials < 1:
        raise ValueError("trials must be positive")
    sp = params or sim.SimParams()
    if duration is None:
        duration, _ = nominal_duration(scene, design, sp, model)
    s0 = sim.initial_state(scene, sp)
    n_o, n_a = len(obstacle_levels), len(actuation_levels)
    succ = np.zeros((n_o, n_a), np.int64)
    rej = np.zeros((n_o, n_a), np.int64)
    fail = np.zeros((n_o, n_a), np.int64)
    for i, lo in enumerate(obstacle_levels):
        for j, la in enumerate(actuation_levels):
            for t0 in range(0, trials, batch):
                ts = range(t0, min(trials, t0 + batch))
                scenes, designs = [], []
                for t in ts:
                    p = Perturbation(sigma_pos=lo * 1e-3, sigma_size=lo / 100.0,
                                     sigma_P=la / 100.0, sigma_l=la / 100.0,
                                     seed=trial_seed(seed, i, j, t))
                    st = {}
                    sc, de = perturb(scene, design, p, st)
                    rej[i, j] += st["rejected"]
                    scenes.append(sc)
                    designs.append(de)
                trs = sim.rollout_batch([s0] * len(scenes), scenes, designs,
                                        [duration] * len(scenes), sp, model, stop_on_goal=True)
                succ[i, j] += sum(1 for tr in trs if tr.reached)
                fail[i, j] += sum(1 for tr in trs if tr.status != 0)
            if progress is not None:
                progress(i, j, succ[i, j] / trials)
    return RobustnessGrid(tuple(obstacle_levels), tuple(actuation_levels), trials, seed,
                          float(duration), succ, rej, fail)


def binomial_band(p: float, n: int, n_sigma: float = 2.0) -> float:
    return n_sigma * math.sqrt(max(p * (1 - p), 0.0) / n)
