"""Plan a design for the elbow tube, replay it and write an SVG.

    python3 demos/plan_tube.py [seed] [out.svg]
"""
import sys

from vinesim import planner, render, scene, simulator
from vinesim.synthesis import DesignCatalog
from vinesim.units import PSI

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out = sys.argv[2] if len(sys.argv) > 2 else "tube_plan.svg"

sc = scene.make_env("tube")
params = planner.PlannerParams(heuristic_enabled=False, stop_at_first=True, refine_iterations=8)
res = planner.plan(sc, DesignCatalog(), params, seed)
if not res.success:
    sys.exit("no solution within the budget")

st = res.stats
print(f"{res.design.n_curved} curved section(s), best cost {res.best_cost:.3f}")
print(f"first solution {st['solve_time']:.1f} s, {st['iterations']} iterations, "
      f"{st['iter_time'] * 1e3:.0f} ms per iteration")
for s in res.design.sections:
    print(f"  section at {s.start * 1e3:.0f} mm: {s.n_units} x {s.l_0 * 1e3:.0f} mm units, "
          f"{s.P_act / PSI:.1f} psi, side {s.side:+d}")

tr = planner.replay(sc, res)
print("replay reaches the goal:", tr.reached)
pts = simulator.forward_kinematics(tr.final)[0]
with open(out, "w") as fh:
    fh.write(render.scene_svg(sc, vine_points=pts, vine_radius=0.03335, tip_paths=[tr.tips],
                              title="tube"))
print("wrote", out)
