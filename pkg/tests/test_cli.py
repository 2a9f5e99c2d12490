import json
from pathlib import Path

import numpy as np
import pytest

from treemart import cli


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def only_dir(root: Path, prefix: str) -> list[Path]:
    return sorted(p for p in root.iterdir() if p.name.startswith(prefix))


def test_simulate_twice_is_byte_identical(tmp_path):
    for _ in range(2):
        assert run(tmp_path, "simulate", "--model", "yule", "--stop", "time=1", "--paths", "1", "--seed", "7") == 0
    a, b = only_dir(tmp_path, "simulate-")
    assert b.name == a.name + ".1"  # the first run is left untouched
    for name in ("trajectories.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "trajectories.csv").read_text().splitlines()[0]
    assert header == "path_id,index,kind,z,value"


def test_threads_do_not_change_output(tmp_path):
    args = ["simulate", "--model", "yule", "--stop", "time=2", "--paths", "5", "--z", "0.7,1.3"]
    run(tmp_path / "one", *args, "--threads", "1")
    run(tmp_path / "two", *args, "--threads", "2")
    [a], [b] = only_dir(tmp_path / "one", "simulate-"), only_dir(tmp_path / "two", "simulate-")
    assert a.name == b.name
    assert (a / "trajectories.csv").read_bytes() == (b / "trajectories.csv").read_bytes()


@pytest.mark.parametrize("args,kinds", [
    (["--model", "bst", "--stop", "size=30", "--kinds", "BST,dBST"], {"BST", "dBST"}),
    (["--model", "bisection", "--stop", "generation=4"], {"BIS"}),
    (["--model", "yule", "--stop", "leaves=20", "--kinds", "dYULE,dGEN"], {"dYULE", "dGEN"}),
])
def test_simulate_models(tmp_path, args, kinds):
    assert run(tmp_path, "simulate", "--paths", "2", *args) == 0
    [d] = only_dir(tmp_path, "simulate-")
    rows = (d / "trajectories.csv").read_text().splitlines()[1:]
    assert {r.split(",")[2] for r in rows} == kinds


def test_half_rows_are_one(tmp_path):
    run(tmp_path, "simulate", "--model", "yule", "--stop", "time=2", "--paths", "3", "--z", "0.5")
    [d] = only_dir(tmp_path, "simulate-")
    values = [float(r.split(",")[4]) for r in (d / "trajectories.csv").read_text().splitlines()[1:]]
    assert values and all(v == 1.0 for v in values)


def test_solve_smoothing(tmp_path):
    assert run(tmp_path, "solve", "--equation", "smoothing", "--z", "1", "--xmax", "10") == 0
    [d] = only_dir(tmp_path, "solve-")
    data = np.loadtxt(d / "solution.csv", delimiter=",", skiprows=2)
    assert np.max(np.abs(data[:, 1] - 1 / (1 + data[:, 0]))) <= 1e-6


def test_solve_pantograph(tmp_path):
    assert run(tmp_path, "solve", "--equation", "pantograph", "--alpha", "1.2") == 0
    [d] = only_dir(tmp_path, "solve-")
    summary = json.loads((d / "solution.json").read_text())
    assert summary["residual"] < 1e-8 and summary["tail"]["critical"] is False


def test_verify_onestep(tmp_path, capsys):
    assert run(tmp_path, "verify", "--suite", "onestep", "--z", "0.7", "--seed", "1") == 0
    [d] = only_dir(tmp_path, "verify-")
    report = json.loads((d / "report-onestep.json").read_text())
    assert report["statistic"] <= 1e-12 and report["verdict"] == "pass"


def test_verify_failure_names_criterion(tmp_path, capsys):
    status = run(tmp_path, "verify", "--suite", "onestep", "--z", "0.7", "--tolerances", '{"tol": -1}')
    assert status == 1
    assert "criterion 2 (onestep)" in capsys.readouterr().err


def test_report_collects(tmp_path, capsys):
    run(tmp_path, "verify", "--suite", "critical")
    [d] = only_dir(tmp_path, "verify-")
    assert cli.main(["report", str(d), "--out", str(tmp_path)]) == 0
    [r] = only_dir(tmp_path, "report-")
    assert "critical-points" in (r / "summary.csv").read_text()


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "simulate", "model": "bst", "stop": "size=10", "paths": 4}))
    assert run(tmp_path, "simulate", "--config", str(cfg), "--paths", "2") == 0
    [d] = only_dir(tmp_path, "simulate-")
    assert json.loads((d / "manifest.json").read_text())["config"]["paths"] == 2


@pytest.mark.parametrize("args,field", [
    (["simulate", "--model", "bst", "--stop", "time=3"], "stop"),
    (["simulate", "--paths", "0"], "paths"),
    (["solve", "--equation", "pantograph", "--alpha", "0.5"], "alpha"),
    (["verify", "--suite", "onestep", "--tolerances", '{"bogus": 1}'], "tolerances"),
])
def test_invalid_config_is_usage_error(tmp_path, capsys, args, field):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, *args)
    assert exc.value.code == 2
    assert f"field '{field}'" in capsys.readouterr().err
    assert not (tmp_path.exists() and any(tmp_path.iterdir()))


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "simulate", "colour": "red"}))
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert "colour" in capsys.readouterr().err


def test_resource_error_exit(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--model", "yule", "--stop", "generation=40") == 3
    assert "resource error" in capsys.readouterr().err
