"""Command-line interface: ``python -m vinesim <command> ...``.

Commands write structured-text (JSON) results except for the binary
dataset and model files, which get a JSON manifest alongside. Every output
records the tool version, the seed and sha256 hashes of its input files.

Exit codes: 0 success, 1 simulated vine missed the goal, 2 parse or input
error, 3 infeasible request, 4 budget exhausted, 5 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__

EXIT_OK = 0
EXIT_MISSED = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4
EXIT_NUMERIC = 5


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _meta(args, inputs=(), **extra):
    out = {"tool": "vinesim", "tool_version": __version__, "command": args.command}
    if hasattr(args, "seed"):
        out["seed"] = args.seed
    out["inputs"] = {str(p): sha256_file(p) for p in inputs if p}
    out.update(extra)
    return out


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(path, "w") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _write_json(path, doc):
    _write_text(path, json.dumps(doc, indent=2))


def _write_manifest(path, meta, **fields):
    doc = {"format": "vinesim-manifest", "version": 1, **meta, **fields,
           "output": {"path": str(path), "sha256": sha256_file(path)}}
    _write_json(str(path) + ".manifest.json", doc)
    return doc


def _load_scene(args):
    from .scene import SceneError, Scene, make_env

    if getattr(args, "scene", None):
        try:
            return Scene.load(args.scene)
        except OSError as exc:
            raise CliError(f"cannot read scene: {exc}", EXIT_PARSE) from exc
        except SceneError as exc:
            raise CliError(f"{args.scene}: {exc}", EXIT_PARSE) from exc
    try:
        return make_env(args.env, args.scale)
    except SceneError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc


def _load_design(path):
    from .synthesis import ActuatorDesign

    try:
        with open(path) as fh:
            return ActuatorDesign.loads(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read design: {exc}", EXIT_PARSE) from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"{path}: invalid design: {exc}", EXIT_PARSE) from exc


def _load_model(path):
    if not path:
        return None
    from .surrogate import FormatError, SurrogateModel

    try:
        return SurrogateModel.load(path)
    except (OSError, FormatError) as exc:
        raise CliError(f"cannot load model {path}: {exc}", EXIT_PARSE) from exc


def _catalog(args):
    from .synthesis import DesignCatalog
    from .units import MM, PSI

    try:
        return DesignCatalog(pressures=tuple(p * PSI for p in args.pressures),
                             length_resolution=args.length_step * MM,
                             length_range=(args.length_min * MM, args.length_max * MM))
    except ValueError as exc:
        raise CliError(f"invalid catalog: {exc}", EXIT_PARSE) from exc


def _sim_params(args):
    from .simulator import SimParams

    return SimParams(n_steps=args.inner_steps, dt=args.dt)


# -- commands ---------------------------------------------------------


def cmd_gen_data(args):
    from .spam import SpamGeometry
    from .surrogate import generate_dataset
    from .units import PSI

    geom = SpamGeometry()
    t0 = time.perf_counter()
    data = generate_dataset(geom, (args.p_min * PSI, args.p_max * PSI), args.n, args.seed,
                            min_rows=1)
    data.save(args.out)
    _write_manifest(args.out, _meta(args), rows=len(data),
                    pressure_range_psi=[args.p_min, args.p_max],
                    geometry={"R_c": geom.R_c, "R_act": geom.R_act, "l_0": geom.l_0,
                              "a_corr": geom.a_corr},
                    seconds=time.perf_counter() - t0)
    print(f"wrote {len(data)} rows to {args.out}")
    return EXIT_OK


def cmd_train(args):
    from .surrogate import Dataset, FormatError, SurrogateSpec, train

    if args.epochs < 1:
        raise CliError("--epochs must be at least 1; no training performed", EXIT_PARSE)
    try:
        data = Dataset.load(args.data)
    except (OSError, FormatError) as exc:
        raise CliError(f"cannot load dataset: {exc}", EXIT_PARSE) from exc
    t0 = time.perf_counter()
    model = train(SurrogateSpec(), data, args.seed, epochs=args.epochs,
                  target_mse=args.target_mse, mse_bound=args.mse_bound)
    model.save(args.out)
    h = model.history
    report = {"val_mse": h["val_mse"], "best_epoch": h["best_epoch"],
              "epochs_run": h["epochs_run"], "train_rows": h["train_rows"],
              "val_rows": h["val_rows"], "seconds": time.perf_counter() - t0}
    _write_manifest(args.out, _meta(args, [args.data]), **report)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_simulate(args):
    from . import render
    from . import simulator as sim
    from .synthesis import ActuatorDesign

    scene = _load_scene(args)
    design = _load_design(args.design) if args.design else ActuatorDesign()
    model = _load_model(args.model)
    sp = _sim_params(args)
    tr = sim.simulate(scene, design, args.duration, sp, model, stop_on_goal=args.stop_on_goal)
    doc = tr.to_dict(meta=_meta(args, [args.scene, args.design, args.model],
                                scene=scene.name, duration=args.duration))
    _write_json(args.out, doc)
    if args.svg:
        pts = sim.forward_kinematics(tr.final)[0] if tr.final is not None else None
        _write_text(args.svg, render.scene_svg(scene, vine_points=pts,
                                               vine_radius=sp.body.R_vine,
                                               tip_paths=[tr.tips], title=scene.name))
    if tr.status == sim.K.ST_NONFINITE:
        raise CliError(f"simulation failed: {tr.error}", EXIT_NUMERIC)
    print(f"reached={tr.reached} steps={tr.steps} status={tr.status}", file=sys.stderr)
    return EXIT_OK if tr.reached else EXIT_MISSED


def cmd_plan(args):
    from . import render
    from . import simulator as sim
    from .planner import PlannerParams, plan

    scene = _load_scene(args)
    catalog = _catalog(args)
    model = _load_model(args.model)
    pp = PlannerParams(heuristic_enabled=not args.no_heuristic, time_budget=args.budget,
                       iteration_budget=args.iterations, stop_at_first=args.first,
                       refine_iterations=args.refine, batch_size=args.batch)
    res = plan(scene, catalog, pp, args.seed, sim_params=_sim_params(args), model=model)
    st = res.stats
    meta = _meta(args, [args.scene, args.model], scene=scene.name,
                 heuristic=not args.no_heuristic)
    report = {"format": "vinesim-plan-report", "version": 1, "meta": meta,
              "success": res.success,
              "solve_time": st["solve_time"], "best_cost": st["best_cost"],
              "iter_time": st["iter_time"],
              "n_curved": None if res.design is None else res.design.n_curved,
              **{k: st[k] for k in ("iterations", "rollouts", "inserted", "pruned",
                                    "first_solution_iteration", "reverse_tree_time",
                                    "reverse_tree_nodes", "total_time", "epochs", "nodes",
                                    "budget_exhausted")},
              "cost_history": [[int(i), float(c)] for i, c in st["cost_history"]],
              "duration": None if not res.success else res.total_steps * _sim_params(args).dt,
              "tip_path": res.tip_path.tolist()}
    _write_json(args.report, report)
    if res.success and args.out:
        _write_text(args.out, res.design.dumps(meta=meta, best_cost=res.best_cost,
                                               durations=res.durations))
    if args.svg:
        vine = None
        if res.success:
            vine = sim.forward_kinematics(res.solution[-1].vine)[0]
        _write_text(args.svg, render.scene_svg(
            scene, vine_points=vine, vine_radius=0.03335,
            tip_paths=[res.tip_path] if res.success else [], title=scene.name,
            tree=res.reverse_tree if args.show_tree else None))
    if not res.success:
        print("no solution within the budget", file=sys.stderr)
        return EXIT_BUDGET
    print(f"solved: {res.design.n_curved} curved sections, cost {res.best_cost:.4f}, "
          f"first solution after {st['solve_time']:.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_robust(args):
    from . import render
    from .robust import robustness_grid

    scene = _load_scene(args)
    design = _load_design(args.design)
    model = _load_model(args.model)

    def progress(i, j, rate):
        if args.verbose:
            print(f"cell ({i}, {j}) success {rate:.3f}", file=sys.stderr)

    t0 = time.perf_counter()
    grid = robustness_grid(scene, design, obstacle_levels=tuple(args.obstacle_levels),
                           actuation_levels=tuple(args.actuation_levels), trials=args.trials,
                           seed=args.seed, params=_sim_params(args), model=model,
                           duration=args.duration, progress=progress)
    grid.meta = {"meta": _meta(args, [args.scene, args.design, args.model], scene=scene.name),
                 "seconds": time.perf_counter() - t0}
    _write_json(args.out, grid.to_dict())
    if args.svg:
        _write_text(args.svg, render.heatmap_svg(
            grid.rates, [f"{v:g}" for v in grid.obstacle_levels],
            [f"{v:g}" for v in grid.actuation_levels],
            title=f"success rate over {grid.trials} trials",
            row_name="obstacle shift (% size, mm position)",
            col_name="bending control shift (% pressure and length)"))
    return EXIT_OK


def cmd_synth(args):
    from .beam import VineBodyParams
    from .spam import SpamGeometry
    from .synthesis import ActuatorDesign, Section, curvature_bounds, synthesize
    from .units import MM, PSI

    catalog = _catalog(args)
    body, geom = VineBodyParams(), SpamGeometry()
    if args.units < 1:
        raise CliError("--units must be at least 1", EXIT_PARSE)
    lo, hi = curvature_bounds(catalog, body, geom)
    sections, rows = [], []
    start = args.start * MM
    for k, theta in enumerate(args.theta):
        side = 1 if theta >= 0 else -1
        r = synthesize(abs(theta), catalog, body, geom, starts=args.starts, seed=args.seed)
        rows.append({"theta": theta, "pressure_psi": r.P_act / PSI,
                     "l0_mm": int(round(r.l_0 / MM)), "theta_achieved": r.theta_achieved * side})
        if r.is_null:
            continue
        sec = Section(start, args.units, round(r.l_0 / MM) * MM, r.P_act, side)
        sections.append(sec)
        start = sec.end + args.gap * MM
    design = ActuatorDesign(tuple(sections))
    doc = design.to_dict(meta=_meta(args), curvature_bounds=[lo, hi], synthesis=rows)
    for s in doc["sections"]:
        s["l0"] = int(round(s["l0"]))
    _write_json(args.out, doc)
    return EXIT_OK


# -- parser -----------------------------------------------------------


def _add_scene(p):
    from .scene import ENV_NAMES

    g = p.add_mutually_exclusive_group()
    g.add_argument("--scene", help="scene file (JSON)")
    g.add_argument("--env", choices=ENV_NAMES, default="tube", help="benchmark environment")
    p.add_argument("--scale", type=float, default=1.0, help="benchmark scale factor")


def _add_sim(p):
    p.add_argument("--dt", type=float, default=0.1, help="time step [s]")
    p.add_argument("--inner-steps", type=int, default=50, help="descent iterations per step")
    p.add_argument("--model", help="surrogate model file; default is the numeric force table")


def _add_catalog(p):
    p.add_argument("--pressures", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.0, 2.5],
                   help="available pressures [psi]")
    p.add_argument("--length-min", type=float, default=10.0, help="[mm]")
    p.add_argument("--length-max", type=float, default=45.0, help="[mm]")
    p.add_argument("--length-step", type=float, default=1.0, help="[mm]")


def build_parser():
    ap = argparse.ArgumentParser(prog="vinesim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"vinesim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the surrogate training dataset")
    p.add_argument("--n", type=int, default=40000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-min", type=float, default=0.25, help="[psi]")
    p.add_argument("--p-max", type=float, default=3.0, help="[psi]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the force surrogate")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-mse", type=float, default=None)
    p.add_argument("--mse-bound", type=float, default=0.005)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="roll out a design in a scene")
    _add_scene(p)
    _add_sim(p)
    p.add_argument("--design", help="design file; default is an unactuated vine")
    p.add_argument("--duration", type=float, required=True, help="[s]")
    p.add_argument("--seed", type=int, default=0, help="recorded only; simulation is deterministic")
    p.add_argument("--stop-on-goal", action="store_true")
    p.add_argument("--out", default="-", help="trajectory file")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", help="search for a design reaching the goal")
    _add_scene(p)
    _add_sim(p)
    _add_catalog(p)
    p.add_argument("--budget", type=float, default=120.0, help="wall-clock budget [s]")
    p.add_argument("--iterations", type=int, default=100000, help="iteration budget")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-heuristic", action="store_true")
    p.add_argument("--first", action="store_true", help="stop at the first solution")
    p.add_argument("--refine", type=int, default=0,
                   help="with --first, keep searching this many iterations after it")
    p.add_argument("--out", help="design file")
    p.add_argument("--report", default="-", help="report file")
    p.add_argument("--svg")
    p.add_argument("--show-tree", action="store_true", help="draw the reverse tree")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("robust", help="success-rate grid under perturbations")
    _add_scene(p)
    _add_sim(p)
    p.add_argument("--design", required=True)
    p.add_argument("--obstacle-levels", type=float, nargs="+",
                   default=[0.0, 2.5, 5.0, 7.5, 10.0],
                   help="std dev in percent of size and mm of position")
    p.add_argument("--actuation-levels", type=float, nargs="+",
                   default=[0.0, 2.5, 5.0, 7.5, 10.0],
                   help="std dev in percent of pressure and unit length")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--duration", type=float, default=None,
                   help="[s]; default is 1.25x the nominal time to goal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", default="-")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_robust)

    p = sub.add_parser("synth", help="synthesize actuator sections for bends")
    _add_catalog(p)
    p.add_argument("--theta", type=float, nargs="+", required=True,
                   help="per-segment bends [rad]; the sign picks the side")
    p.add_argument("--units", type=int, default=4, help="units per section")
    p.add_argument("--start", type=float, default=0.0, help="first section start [mm]")
    p.add_argument("--gap", type=float, default=0.0, help="spacing between sections [mm]")
    p.add_argument("--starts", type=int, default=1000, help="LM multistart count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_synth)
    return ap


def _configure_threads():
    n = os.environ.get("VINESIM_THREADS")
    if n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    from .planner import InfeasibleSceneError
    from .scene import SceneError
    from .simulator import SimulationError
    from .spam import InfeasibleError
    from .synthesis import InfeasibleCurvatureError, LMConvergenceError
    from .roots import NoConvergenceError
    from .surrogate import TrainingError

    args = build_parser().parse_args(argv)
    _configure_threads()
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InfeasibleCurvatureError, InfeasibleSceneError, InfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SceneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SimulationError, LMConvergenceError, NoConvergenceError, TrainingError,
            FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
