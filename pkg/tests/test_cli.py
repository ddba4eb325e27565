import json
import os

import pytest

from pyScenarioCoverage.cli import main
from pyScenarioCoverage.grid import FORMAT_HEADER

CONFIGS = os.path.join(os.path.dirname(__file__), "configs")


def _path(name):
    return os.path.join(CONFIGS, name)


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_volume(capsys):
    code, out = _run(capsys, "volume", _path("wall.yaml"))
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("config_hash: 0x")
    assert "V_S: 20.0" in lines
    assert "V_0: 1.0" in lines
    assert "n: 20" in lines
    assert "cells: 20" in lines


@pytest.mark.parametrize(
    "name, field",
    [
        ("missing_upper.yaml", "scenario_space.continuous[0].upper"),
        ("empty_discrete.yaml", "scenario_space.discrete[0].values"),
    ],
)
def test_config_error_exit_code(capsys, caplog, name, field):
    code, out = _run(capsys, "volume", _path(name))
    assert code == 2
    assert out == ""
    assert field in caplog.text


@pytest.mark.parametrize(
    "name, mode, counts, coverage, rate",
    [
        ("wall_safe.yaml", "sample", {"SafeVerified": 9}, 1.0, None),
        ("wall_safe.yaml", "formal", {"SafeVerified": 9}, 1.0, 1.0),
        ("wall_unsafe.yaml", "sample", {"UnsafeObserved": 9}, 0.0, None),
        ("wall_infeasible.yaml", "formal", {"SafetyInfeasible": 9}, 0.0, 1.0),
    ],
)
def test_fixture_campaigns(capsys, tmp_path, name, mode, counts, coverage, rate):
    ledger = tmp_path / "ledger.json"
    code, out = _run(capsys, "verify", _path(name), "--mode", mode, "--out", str(ledger))
    assert code == 0
    report = json.loads(out)
    for outcome, n in counts.items():
        assert report["counts"][outcome] == n
    assert report["safe_coverage"] == pytest.approx(coverage)
    assert report["penetration_rate"] == rate
    assert report["full_coverage"] is (coverage == 1.0)
    assert json.loads(ledger.read_text())["statistics"] == report


def test_verify_is_deterministic(capsys, tmp_path):
    first, second, parallel = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    assert _run(capsys, "verify", _path("wall.yaml"), "--out", str(first))[0] == 0
    assert _run(capsys, "verify", _path("wall.yaml"), "--out", str(second))[0] == 0
    assert _run(capsys, "verify", _path("wall.yaml"), "--jobs", "2", "--out", str(parallel))[0] == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes() == parallel.read_bytes()


def test_verify_one_cell(capsys, tmp_path):
    ledger = tmp_path / "ledger.json"
    code, out = _run(capsys, "verify", _path("wall.yaml"), "--cell", "3", "--out", str(ledger))
    assert code == 0
    report = json.loads(out)
    assert report["counts"]["UnsafeObserved"] == 1
    assert report["counts"]["Unverified"] == 19
    assert [c["index"] for c in json.loads(ledger.read_text())["cells"]] == [[3]]


@pytest.mark.parametrize("cell", ["99", "a,b"])
def test_verify_bad_cell(capsys, cell):
    assert _run(capsys, "verify", _path("wall.yaml"), "--cell", cell)[0] == 2


def test_report_evolution(capsys, tmp_path):
    before, after, report_path = tmp_path / "idle.json", tmp_path / "brake.json", tmp_path / "report.json"
    _run(capsys, "verify", _path("wall_unsafe.yaml"), "--out", str(before))
    _run(capsys, "verify", _path("wall_safe.yaml"), "--out", str(after))
    matrix = tmp_path / "matrix.csv"
    code, out = _run(
        capsys, "report", str(before), str(after), "--out", str(report_path), "--matrix", str(matrix)
    )
    assert code == 0
    report = json.loads(out)
    assert report_path.read_text() == out
    assert [entry["policy"]["name"] for entry in report["ledgers"]] == ["idle", "brake"]
    assert report["evolution"]["monotone"]
    assert report["evolution"]["deltas"][0]["UnsafeObserved"] == pytest.approx(-9.0)
    assert report["evolution"]["target_cells"] == []
    assert matrix.read_text().splitlines()[1].endswith("SafeVerified")
    assert _run(capsys, "report", str(before), str(after))[1] == out


def test_report_mismatched_ledgers(capsys, tmp_path):
    far, near = tmp_path / "far.json", tmp_path / "near.json"
    _run(capsys, "verify", _path("wall_safe.yaml"), "--out", str(far))
    _run(capsys, "verify", _path("wall_infeasible.yaml"), "--out", str(near))
    assert _run(capsys, "report", str(far), str(near))[0] == 2


def test_report_missing_ledger(capsys, tmp_path):
    assert _run(capsys, "report", str(tmp_path / "nothing.json"))[0] == 2


def test_reach(capsys, tmp_path):
    code, out = _run(capsys, "reach", _path("wall.yaml"))
    assert code == 0
    assert out.startswith(FORMAT_HEADER)
    exported = tmp_path / "brs.txt"
    assert _run(capsys, "reach", _path("wall.yaml"), "--spec-kind", "maxbrs", "--out", str(exported))[0] == 0
    assert exported.read_text().startswith(FORMAT_HEADER)
    assert exported.read_text() != out


def test_reach_needs_a_reach_block(capsys):
    assert _run(capsys, "reach", _path("wall_safe.yaml"))[0] == 2


def test_mode_is_a_flag_not_a_numeric(capsys):
    with pytest.raises(SystemExit):
        main(["verify", _path("wall.yaml"), "--mode", "fast"])
