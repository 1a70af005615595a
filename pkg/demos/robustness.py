"""Small robustness grid for a planned tube design (a few cells, few
trials; the CLI ``robust`` command runs the full 5 x 5 x 1000 grid).

    python3 demos/robustness.py
"""
from vinesim import planner, robust, scene
from vinesim.synthesis import DesignCatalog

sc = scene.make_env("tube")
res = planner.plan(sc, DesignCatalog(),
                   planner.PlannerParams(heuristic_enabled=False, stop_at_first=True), 0)
grid = robust.robustness_grid(sc, res.design, obstacle_levels=(0.0, 10.0),
                              actuation_levels=(0.0, 5.0, 10.0), trials=100, seed=0)
print("rows: obstacle level (% size, mm position); columns: actuation level (%)")
print("       " + "".join(f"{a:>8g}" for a in grid.actuation_levels))
for lvl, row in zip(grid.obstacle_levels, grid.rates):
    print(f"{lvl:>6g} " + "".join(f"{v:8.2f}" for v in row))
