"""End-to-end command-line pipeline on a small instance, plus flag and error
handling."""

import csv
import json

import numpy as np
import pytest

from ennopt.cli import main
from ennopt.model import load_model


def run(*argv):
    return main(list(argv))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_sample_deterministic(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    assert run("sample", "--fn", "peaks", "--method", "lhs", "--n", "50",
               "--out", str(a), "--seed", "3") == 0
    assert run("sample", "--fn", "peaks", "--method", "lhs", "--n", "50",
               "--out", str(b), "--seed", "3") == 0
    assert run("sample", "--fn", "peaks", "--method", "mvn", "--n", "50",
               "--out", str(c), "--seed", "3") == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    rows = a.read_text().splitlines()
    assert rows[0] == "x1,x2,y" and len(rows) == 51


def test_pipeline_sample_train_optimize_oracle_report(tmp_path):
    data = tmp_path / "d.csv"
    m = tmp_path / "m.json"
    r1 = tmp_path / "runs"
    r1.mkdir()
    assert run("sample", "--fn", "peaks", "--n", "80", "--out", str(data),
               "--seed", "1") == 0
    assert run("train", "--data", str(data), "--e", "2", "--layers", "4",
               "--sense", "min", "--max-epochs", "15", "--out", str(m),
               "--seed", "1") == 0

    model = load_model(m)
    assert model.n_networks == 2 and model.sense == "min"

    rj = r1 / "tiny.json"
    rc = tmp_path / "row.csv"
    assert run("optimize", "--model", str(m), "--mode", "two_phase",
               "--time-limit", "60", "--phase1-limit", "30",
               "--out", str(rj), "--csv", str(rc), "--label", "tiny") == 0
    rep = read_json(rj)
    assert rep["solved"] is True and rep["label"] == "tiny"

    oj = tmp_path / "o.json"
    assert run("oracle", "--model", str(m), "--out", str(oj)) == 0
    orc = read_json(oj)
    assert rep["objective_scaled"] == pytest.approx(orc["objective_scaled"],
                                                    abs=1e-5)
    assert orc["sense"] == "min"

    table = tmp_path / "table.csv"
    assert run("report", "--glob", str(r1 / "*.json"), "--out", str(table)) == 0
    with open(table, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["instance", "e", "L", "time", "solved", "gap", "time_gap"]
    assert rows[1][0] == "tiny" and rows[1][1] == "2" and rows[1][4] == "1"


def test_train_deterministic_bytes(tmp_path):
    data = tmp_path / "d.csv"
    run("sample", "--fn", "beale", "--n", "40", "--out", str(data), "--seed", "2")
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    for out in (m1, m2):
        assert run("train", "--data", str(data), "--e", "2", "--layers", "3,3",
                   "--max-epochs", "8", "--out", str(out), "--seed", "7") == 0
    assert m1.read_bytes() == m2.read_bytes()


def test_optimize_deterministic_modulo_timing(tmp_path):
    data = tmp_path / "d.csv"
    m = tmp_path / "m.json"
    run("sample", "--fn", "peaks", "--n", "60", "--out", str(data), "--seed", "4")
    run("train", "--data", str(data), "--e", "1", "--layers", "4",
        "--max-epochs", "10", "--out", str(m), "--seed", "4")
    reps = []
    for name in ("r1.json", "r2.json"):
        out = tmp_path / name
        assert run("optimize", "--model", str(m), "--time-limit", "60",
                   "--phase1-limit", "60", "--out", str(out),
                   "--seed", "5") == 0
        d = read_json(out)
        for volatile in ("seconds", "time_gap"):
            d.pop(volatile)
        reps.append(d)
    assert reps[0] == reps[1]
    # e=1 never enters the spatial phase
    assert reps[0]["nodes"]["phase2"] == 0


def test_errors_are_one_line_diagnostics(tmp_path, capsys):
    assert run("train", "--data", str(tmp_path / "absent.csv"),
               "--out", str(tmp_path / "m.json")) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("ennopt:") and len(err.splitlines()) == 1

    assert run("train", "--data", str(tmp_path / "absent.csv"),
               "--layers", "20,oops", "--out", str(tmp_path / "m.json")) == 1

    assert run("report", "--glob", str(tmp_path / "none-*.json"),
               "--out", str(tmp_path / "t.csv")) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert "no report files" in err


def test_unknown_flags_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("sample", "--fn", "peaks", "--n", "5",
            "--out", str(tmp_path / "x.csv"), "--frobnicate")
    assert exc.value.code != 0
    with pytest.raises(SystemExit):
        run("sample", "--fn", "rosenbrock", "--n", "5",
            "--out", str(tmp_path / "x.csv"))
