import json
import subprocess
import sys

import numpy as np
import pytest

from zsmg.cli import cli_main
from zsmg.files import load_game, load_model, read_json, save_game, write_json
from zsmg.game_core import MarkovGame


def run(capsys, *argv):
    code = cli_main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def pennies_file(path, signed=False):
    r = [[[1.0, -1.0], [-1.0, 1.0]]] if signed else [[[1.0, 0.0], [0.0, 1.0]]]
    write_json(path, {"gamma": 0.0, "num_states": 1, "num_actions_max": 2, "num_actions_min": 2,
                      "transition": [[[[1.0], [1.0]], [[1.0], [1.0]]]], "reward": r})


def test_solve_matching_pennies(tmp_path, capsys):
    pennies_file(tmp_path / "mp.json")
    code, out, _ = run(capsys, "solve", str(tmp_path / "mp.json"))
    doc = json.loads(out)
    assert code == 0 and doc["value"] == pytest.approx([0.5]) and np.allclose(doc["mu"], 0.5)


def test_solve_signed_pennies_value_zero(tmp_path, capsys):
    pennies_file(tmp_path / "mp.json", signed=True)
    code, _, err = run(capsys, "solve", str(tmp_path / "mp.json"))
    assert code == 1 and json.loads(err)["error"] == "GameError"
    code, out, _ = run(capsys, "solve", str(tmp_path / "mp.json"), "--signed-rewards")
    assert code == 0 and json.loads(out)["value"] == pytest.approx([0.0], abs=1e-9)


def test_solve_smooth_oracle(tmp_path, capsys):
    pennies_file(tmp_path / "mp.json")
    code, out, _ = run(capsys, "solve", str(tmp_path / "mp.json"), "--oracle", "smooth_regularized", "--tau", "0.01", "--eps-opt", "1e-3")
    assert code == 0 and json.loads(out)["certified_eps_opt"] <= 1e-3


def test_estimate_writes_model(tmp_path, capsys):
    from zsmg.instances import random_game

    save_game(tmp_path / "g.json", random_game(3, 2, 2, 0.5, None, 0))
    code, out, _ = run(capsys, "estimate", str(tmp_path / "g.json"), "--n", "7", "--seed", "3", "--out", str(tmp_path / "m.json"))
    assert code == 0 and json.loads(out)["generative_calls"] == 7 * 12
    model = load_model(tmp_path / "m.json")
    assert model.samples_per_pair == 7
    run(capsys, "estimate", str(tmp_path / "g.json"), "--n", "7", "--seed", "3", "--out", str(tmp_path / "m2.json"))
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_instance_hard_then_verify(tmp_path, capsys):
    out_path = tmp_path / "hard.json"
    code, out, _ = run(capsys, "instance", "hard", "--gamma", "0.8", "--eps", "5e-3",
                       "--hypothesis", "0,1,1", "--reward-id", "0,1,1", "--out", str(out_path))
    assert code == 0
    side = tmp_path / "hard.instance.json"
    assert json.loads(out)["sidecar"] == str(side)
    assert read_json(side)["claimed_ne"] == {"0": [1, 1]}
    code, out, _ = run(capsys, "verify", str(side), "--game", str(out_path))
    report = json.loads(out)
    assert code == 0 and report["passed"]
    assert {"spec_invariants", "sidecar_q_closed_form", "game_file", "closed_form_q"} <= {c["name"] for c in report["checks"]}


def test_verify_detects_tampering(tmp_path, capsys):
    run(capsys, "instance", "hard", "--gamma", "0.8", "--eps", "5e-3", "--out", str(tmp_path / "h.json"))
    side = read_json(tmp_path / "h.instance.json")
    side["q_closed_form"][0][0][0] += 1e-3
    write_json(tmp_path / "bad.json", side)
    code, _, err = run(capsys, "verify", str(tmp_path / "bad.json"))
    assert code == 1 and "sidecar_q_closed_form" in json.loads(err)["message"]
    side = read_json(tmp_path / "h.instance.json")
    side["spec"]["alpha2"] = 0.0
    write_json(tmp_path / "bad2.json", side)
    code, _, err = run(capsys, "verify", str(tmp_path / "bad2.json"))
    assert code == 1 and "spec_invariants" in json.loads(err)["message"]


def test_instance_hard_infeasible(tmp_path, capsys):
    code, _, err = run(capsys, "instance", "hard", "--gamma", "0.7", "--eps", "1e-3", "--out", str(tmp_path / "h.json"))
    doc = json.loads(err)
    assert code == 1 and doc["error"] == "InfeasibleSpecError" and "48 eps" in doc["message"]
    code, out, _ = run(capsys, "instance", "hard", "--gamma", "0.7", "--eps", "1e-3", "--relax-window", "--out", str(tmp_path / "h.json"))
    assert code == 0 and json.loads(out)["c"] == pytest.approx(124.1)


def test_instance_random_and_embed(tmp_path, capsys):
    code, _, _ = run(capsys, "instance", "random", "--dims", "3", "2", "4", "--gamma", "0.9", "--branching", "1", "--seed", "5",
                     "--out", str(tmp_path / "r.json"))
    g = load_game(tmp_path / "r.json")
    assert code == 0 and g.shape == (3, 2, 4) and set(np.unique(g.transition)) <= {0.0, 1.0}
    write_json(tmp_path / "mdp.json", {"gamma": 0.5, "transition": [[[1.0, 0.0]], [[0.0, 1.0]]], "reward": [[0.2], [0.9]]})
    code, _, _ = run(capsys, "instance", "embed", str(tmp_path / "mdp.json"), "--dummy-actions", "3", "--out", str(tmp_path / "e.json"))
    e = load_game(tmp_path / "e.json")
    assert code == 0 and e.shape == (2, 1, 3)


def test_sweep_twice_byte_identical(tmp_path, capsys):
    write_json(tmp_path / "cfg.json", {
        "instance_source": {"kind": "random", "dims": [2, 2, 2], "gamma": 0.6, "seed": 0},
        "n_grid": [8, 32, 128], "seeds": [0, 1, 2, 3, 4], "output_path": "sweep.csv",
    })
    code, out, _ = run(capsys, "sweep", str(tmp_path / "cfg.json"))
    assert code == 0 and json.loads(out)["records"] == 15
    first = (tmp_path / "sweep.csv").read_bytes()
    code, _, _ = run(capsys, "sweep", str(tmp_path / "cfg.json"), "--workers", "2")
    assert code == 0 and (tmp_path / "sweep.csv").read_bytes() == first
    assert (tmp_path / "sweep.summary.json").exists()


def test_sweep_bad_config(tmp_path, capsys):
    write_json(tmp_path / "cfg.json", {"instance_source": {"kind": "random"}, "n_grid": [4, 2], "seeds": [0]})
    code, _, err = run(capsys, "sweep", str(tmp_path / "cfg.json"))
    assert code == 1 and json.loads(err)["error"] == "ConfigError"


def test_usage_errors_exit_2(capsys):
    for argv in (["frobnicate"], [], ["estimate", "g.json"], ["instance", "hard", "--gamma", "x", "--eps", "1", "--out", "o"],
                 ["instance", "hard", "--gamma", "0.8", "--eps", "1", "--hypothesis", "1,2", "--out", "o"]):
        code, _, err = run(capsys, *argv)
        assert code == 2 and json.loads(err)["error"] == "UsageError"


def test_missing_file_exit_1(tmp_path, capsys):
    code, _, err = run(capsys, "solve", str(tmp_path / "nope.json"))
    assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"


def test_console_script_entry_point(tmp_path):
    pennies_file(tmp_path / "mp.json")
    proc = subprocess.run([sys.executable, "-m", "zsmg.cli", "solve", str(tmp_path / "mp.json")], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["value"] == pytest.approx([0.5])
    proc = subprocess.run([sys.executable, "-m", "zsmg.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_help_exits_zero(capsys):
    assert cli_main(["--help"]) == 0
    capsys.readouterr()
