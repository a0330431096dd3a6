import json

import pytest

from arrowq.cli import build_parser, main
from arrowq.hst import Hst, verify_hst

from conftest import golden_tree


@pytest.fixture
def golden_files(tmp_path):
    h = tmp_path / "g.hst"
    h.write_text(golden_tree().to_text())
    q = tmp_path / "g.req"
    q.write_text("dummy 0\n1 0\n0 1\n")
    return h, q


def test_verbs_present():
    p = build_parser()
    for verb in ("build-hst", "simulate", "offline", "analyze", "sweep"):
        assert p.parse_args([verb]).verb == verb


def test_build_hst(tmp_path):
    out = tmp_path / "t.hst"
    assert main(["build-hst", "--graph", "cycle:16", "--seed", "3", "--out", str(out)]) == 0
    t = Hst.from_text(out.read_text())
    assert verify_hst(t) == [] and len(t.leaf_map) == 16


def test_simulate_golden(golden_files, capsys):
    h, q = golden_files
    assert main(["simulate", "--hst", str(h), "--requests", str(q)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["order"] == [0, 2, 1] and doc["cost"] == 2.0


def test_simulate_trace(golden_files, capsys):
    h, q = golden_files
    assert main(["simulate", "--hst", str(h), "--requests", str(q), "--trace"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "0.0 2 1 real issue-send"


def test_offline_golden(golden_files, capsys):
    h, q = golden_files
    assert main(["offline", "--hst", str(h), "--requests", str(q)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["opt"] == 2.0 and doc["lower_bound"] <= 2.0 <= doc["upper_bound"]


def test_analyze_generated(capsys):
    assert main(["analyze", "--graph", "grid:3x3", "--workload", "one-shot:4", "--seed", "1",
                 "--sched", "uniform:0.1:1.0"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out.replace("(advisory)", "") or all("advisory" in l for l in out.splitlines() if "FAIL" in l)
    assert out.splitlines()[-1].startswith("cost ")


def test_sweep_with_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"graphs": ["cycle:8"], "workload": "one-shot:3", "trials": 2, "seed": 5}))
    out = tmp_path / "r.csv"
    assert main(["sweep", "--config", str(cfg), "--trials", "3", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 4
    assert (tmp_path / "r.summary.csv").exists()
    assert main(["sweep", "--config", str(cfg), "--print-config"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["trials"] == 2 and printed["graphs"] == ["cycle:8"]


def test_sweep_json_stdout(capsys):
    assert main(["sweep", "--graph", "path:4", "--workload", "one-shot:2", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["rows"]) == 1 and "summary" in doc


def test_bad_input_exit_code(tmp_path, capsys):
    assert main(["sweep", "--workload", "nope:3"]) == 2
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("[1]")
    assert main(["sweep", "--config", str(bad)]) == 2
