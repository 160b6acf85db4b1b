import json
import math
import subprocess
import sys

import pytest

from snapback.cli import RunConfig, run
from snapback.errors import ConfigError
from snapback.report import dumps


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_doubling_search(capsys):
    code, out, _ = _run(capsys, "homoclinic", "search", "--map", "doubling", "--depth", "1")
    assert code == 0
    (orbit,) = json.loads(out)["orbits"]
    assert orbit["classification"] == "Regular"
    assert orbit["segment"][0][0] == pytest.approx(math.pi, abs=1e-12)


def test_locate_tangency(capsys):
    code, out, _ = _run(capsys, "bifurcate", "locate", "--family", "logistic",
                        "--bracket", "0.8", "1.2", "--tol", "1e-9")
    assert code == 0
    assert abs(json.loads(out)["mu0"] - 1) < 1e-9


def test_negative_finding_exits_two(capsys):
    code, out, _ = _run(capsys, "repellor", "find", "--map", "logistic", "--params", "0.2",
                        "--guess", "0.0")
    assert code == 2
    assert json.loads(out)["expanding"] is False


def test_usage_errors_exit_one(capsys):
    code, _, err = _run(capsys, "homoclinic", "search", "--map", "doubling", "--bogus")
    assert code == 1
    assert "usage:" in err
    payload = json.loads(err.strip().splitlines()[-1])
    assert {"code", "message", "context"} <= set(payload)
    assert _run(capsys, "nosuch", "command")[0] == 1


def test_precondition_failure_exits_one(capsys):
    code, _, err = _run(capsys, "bifurcate", "report", "--family", "frozen:logistic:1.2",
                        "--mu", "1.0")
    assert code == 1
    assert json.loads(err)["code"]


def test_config_round_trip(tmp_path, capsys):
    cfg = RunConfig(command="bifurcate locate", family="logistic", bracket=[0.8, 1.2], tol=1e-6)
    assert RunConfig.from_json(cfg.to_json()) == cfg
    path = tmp_path / "run.json"
    path.write_text(cfg.to_json())
    code, out, _ = _run(capsys, "bifurcate", "locate", "--config", str(path))
    assert code == 0 and abs(json.loads(out)["mu0"] - 1) < 1e-6


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"command": "class density", "depthh": 3})
    path = tmp_path / "bad.json"
    path.write_text('{"depthh": 3}')
    assert _run(capsys, "class", "density", "--config", str(path))[0] == 1


def test_reports_are_byte_identical(tmp_path):
    argv = ["example2d", "verify", "--mu-list", "-0.05", "0", "0.05", "--samples", "256"]
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(argv + ["-o", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_cloud_csv_has_header_and_every_point(tmp_path):
    path = tmp_path / "cloud.csv"
    assert run(["class", "density", "--map", "doubling", "--depth", "12", "--csv", "-o",
                str(path)]) == 0
    lines = path.read_text().splitlines()
    assert len(lines) == 4097
    assert lines[0] == "theta"


def test_json_float_tokens():
    assert dumps({"x": 1.0}) == '{\n  "x": 1.0\n}\n'
    assert json.loads(dumps({"x": 0.1 + 0.2}))["x"] == 0.1 + 0.2
    assert json.loads(dumps({"x": float("inf")}))["x"] == "inf"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "snapback", "homoclinic", "search", "--map",
                           "doubling", "--depth", "1"], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert len(json.loads(proc.stdout)["orbits"]) == 1
