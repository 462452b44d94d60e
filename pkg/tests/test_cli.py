from __future__ import annotations

import csv
import json
import shutil
import subprocess

import pytest

from heatlab.cli import main
from heatlab.config import Config, ConfigError, Ladder, load_config
from heatlab.geometry import S2, T


def _write(path, spec):
    path.write_text(spec.to_json())
    return str(path)


@pytest.fixture
def sphere(tmp_path):
    return _write(tmp_path / "s2.json", S2())


@pytest.fixture
def torus(tmp_path):
    return _write(tmp_path / "t1.json", T(1))


def test_spectrum_csv(tmp_path, sphere):
    out = tmp_path / "spec.csv"
    assert main(["spectrum", "--geometry", sphere, "--complex", "derham", "--degree", "0,1", "--cutoff", "6.5",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [(r["grading"], float(r["eigenvalue"]), int(r["multiplicity"])) for r in rows] == [
        ("0", 0.0, 1), ("0", 2.0, 3), ("0", 6.0, 5), ("1", 2.0, 6), ("1", 6.0, 10)
    ]


def test_spectrum_bad_degree(sphere, capsys):
    assert main(["spectrum", "--geometry", sphere, "--complex", "derham", "--degree", "5", "--cutoff", "3"]) == 2
    assert "error" in capsys.readouterr().err


def test_trace_csv(tmp_path, torus):
    out = tmp_path / "trace.csv"
    assert main(["trace", "--geometry", torus, "--complex", "dolbeault", "--aggregate", "super",
                 "--t-ladder", "0.05:0.5:3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["t"]) for r in rows] == pytest.approx([0.05, 0.025, 0.0125])
    assert all(abs(float(r["value"]) - 1) < 1e-15 for r in rows)
    assert all(float(r["error_bound"]) < 1e-26 for r in rows)


def test_coeffs_json(tmp_path, torus):
    out = tmp_path / "c.json"
    assert main(["coeffs", "--geometry", torus, "--complex", "dolbeault", "--aggregate", "derived",
                 "--orders", "0,2", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert {"m", "coefficients", "uncertainty", "ladder"} <= set(doc)
    assert doc["m"] == 2
    assert set(doc["coefficients"]) == {"0", "2"}
    assert float(doc["coefficients"]["2"]) == pytest.approx(0.5, abs=1e-9)
    assert doc["ladder"]["count"] == Config().ladder.count


def test_predict_json(tmp_path, torus):
    out = tmp_path / "p.json"
    assert main(["predict", "--geometry", torus, "--identity", "derived-top", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["value"] == "1/2"
    assert doc["agree"] is True


def test_verify_exit_codes(tmp_path, sphere):
    out, rep = tmp_path / "r.json", tmp_path / "r.csv"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"precision_digits": 40, "ladder": "0.004:0.9:18", "eps_tail": 1e-28}))
    assert main(["verify", "--suite", "L26-SPHERE,MS-CONST", "--config", str(cfg), "--geometry", sphere,
                 "--out", str(out), "--csv", str(rep)]) == 0
    doc = json.loads(out.read_text())
    assert doc["summary"] == {"total": 2, "passed": 2, "failed": 0}
    assert len(rep.read_text().strip().splitlines()) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"max_condition": 10.0}))
    assert main(["verify", "--suite", "L26-SPHERE", "--config", str(bad), "--out", str(out)]) == 1
    assert main(["verify", "--suite", "NOPE", "--out", str(out)]) == 2


def test_bad_geometry_file(tmp_path, capsys):
    p = tmp_path / "g.json"
    p.write_text('{"blocks": [{"kind": "sphere", "radius": -1}]}')
    assert main(["predict", "--geometry", str(p), "--identity", "euler"]) == 2
    assert "radius" in capsys.readouterr().err


def test_config_round_trip(tmp_path):
    cfg = Config(ladder=Ladder(0.01, 0.8, 20), guard_orders=3)
    assert Config.from_dict(cfg.to_dict()) == cfg
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"ladder": "0.01:0.8:20", "guard_orders": 3}))
    assert load_config(p) == cfg


@pytest.mark.parametrize(
    "doc", [{"bogus": 1}, {"ladder": "1:2"}, {"ladder": "0.1:1.5:4"}, {"precision_digits": 5}, {"eps_tail": 0}]
)
def test_config_errors(doc):
    with pytest.raises(ConfigError):
        Config.from_dict(doc)


@pytest.mark.skipif(shutil.which("heatlab") is None, reason="console script not installed")
def test_console_script(sphere):
    res = subprocess.run(["heatlab", "predict", "--geometry", sphere, "--identity", "euler"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["value"] == "2"
