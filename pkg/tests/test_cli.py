import hashlib
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from vinesim import beam, scene as SC
from vinesim.synthesis import ActuatorDesign


def run(*args, cwd=None):
    p = subprocess.run([sys.executable, "-m", "vinesim", *map(str, args)], capture_output=True,
                       text=True, cwd=cwd)
    return p.returncode, p.stdout, p.stderr


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    SC.straight_corridor(length=0.6).save(d / "corridor.json")
    SC.Scene((), (0, 0, 0), (2.0, 0, 0.1), (-1, -2, 3, 2), "empty").save(d / "empty.json")
    return d


def test_gen_data_deterministic_with_manifest(work):
    a, b = work / "a.bin", work / "b.bin"
    assert run("gen-data", "--n", 100, "--seed", 5, "--out", a)[0] == 0
    assert run("gen-data", "--n", 100, "--seed", 5, "--out", b)[0] == 0
    assert sha(a) == sha(b)
    man = json.loads((work / "a.bin.manifest.json").read_text())
    assert man["rows"] == 100 and man["seed"] == 5
    assert man["output"]["sha256"] == sha(a) and man["tool_version"]


def test_train(work):
    data = work / "t.bin"
    run("gen-data", "--n", 2000, "--seed", 1, "--out", data)
    code, _, err = run("train", "--data", data, "--epochs", 0, "--out", work / "m.bin")
    assert code == 2 and "no training" in err
    code, out, _ = run("train", "--data", data, "--epochs", 30, "--mse-bound", 1.0,
                       "--out", work / "m.bin")
    assert code == 0
    rep = json.loads(out)
    assert (rep["train_rows"], rep["val_rows"]) == (1800, 200)
    man = json.loads((work / "m.bin.manifest.json").read_text())
    assert str(data) in man["inputs"]


def test_simulate_reaches_and_renders(work):
    out, svg = work / "traj.json", work / "traj.svg"
    code, _, _ = run("simulate", "--scene", work / "corridor.json", "--duration", 40,
                     "--stop-on-goal", "--out", out, "--svg", svg)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["reached"] and doc["meta"]["inputs"]
    ET.fromstring(svg.read_text())


def test_simulate_miss_exit_code():
    code, _, err = run("simulate", "--env", "tube", "--duration", 5)
    assert code == 1 and "reached=False" in err


def test_simulate_malformed_scene(work):
    bad = work / "bad.json"
    bad.write_text('{"format": "vinesim-scene",\n  "version": 1,\n  "units" "m"}')
    code, _, err = run("simulate", "--scene", bad, "--duration", 1)
    assert code == 2 and "line 3" in err and "column" in err


def test_synth_bounds_and_round_trip(work):
    code, _, err = run("synth", "--theta", 5.0)
    assert code == 3 and "bounds" in err
    out = work / "des.json"
    assert run("synth", "--theta", 0.06, "--units", 40, "--starts", 200, "--out", out)[0] == 0
    doc = json.loads(out.read_text())
    sec = doc["sections"][0]
    assert isinstance(sec["l0"], int)
    d = ActuatorDesign.loads(out.read_text())
    traj = work / "des_traj.json"
    run("simulate", "--scene", work / "empty.json", "--design", out, "--duration", 30,
        "--out", traj)
    th = np.array(json.loads(traj.read_text())["final_state"]["thetas"])
    n_act = d.sections[0].n_units * d.sections[0].l_0 / beam.VineBodyParams().l_seg
    assert np.median(th[: int(n_act) - 2]) == pytest.approx(0.06, rel=0.05)


def test_plan_and_replay(work):
    des, rep, svg = work / "plan.json", work / "report.json", work / "plan.svg"
    code, _, _ = run("plan", "--scene", work / "corridor.json", "--no-heuristic", "--first",
                     "--out", des, "--report", rep, "--svg", svg)
    assert code == 0
    r = json.loads(rep.read_text())
    for k in ("solve_time", "best_cost", "iter_time"):
        assert r[k] is not None
    assert r["n_curved"] == 0
    ET.fromstring(svg.read_text())
    traj = work / "replay.json"
    run("simulate", "--scene", work / "corridor.json", "--design", des, "--duration",
        r["duration"], "--stop-on-goal", "--out", traj)
    tips = np.array(json.loads(traj.read_text())["tip_path"])[:, 1:]
    np.testing.assert_allclose(tips, np.array(r["tip_path"]), atol=1e-9)


def test_plan_budget_exit_code():
    code, _, _ = run("plan", "--env", "maze", "--no-heuristic", "--iterations", 1,
                     "--report", "-")
    assert code == 4


def test_robust_grid(work):
    des = work / "straight.json"
    des.write_text(ActuatorDesign().dumps())
    out, svg = work / "grid.json", work / "grid.svg"
    code, _, _ = run("robust", "--scene", work / "corridor.json", "--design", des,
                     "--obstacle-levels", 0, 5, "--actuation-levels", 0, "--trials", 6,
                     "--out", out, "--svg", svg)
    assert code == 0
    g = json.loads(out.read_text())
    assert g["success_rate"][0][0] == 1.0 and g["trials"] == 6
    ET.fromstring(svg.read_text())


def test_robust_default_trials():
    from vinesim.cli import build_parser
    a = build_parser().parse_args(["robust", "--design", "x"])
    assert a.trials == 1000 and len(a.obstacle_levels) == 5 == len(a.actuation_levels)
