"""End-to-end driver runs on tiny instances, report invariants, and file
emission."""

import csv
import json

import numpy as np
import pytest

from ennopt.driver import (CSV_COLUMNS, RunConfig, optimize_baseline,
                           optimize_two_phase, report_csv_row, time_gap,
                           write_report_csv, write_report_json)
from ennopt.model import forward_ensemble, unscale_objective
from ennopt.oracle import enumerate_patterns_exact
from ennopt.phase2 import Phase2Params
from ennopt.tighten import TightenParams

from conftest import random_ensemble


def quick_cfg(mode="two_phase", **kw):
    base = dict(
        mode=mode, phase1_limit=30.0, total_limit=60.0,
        tighten=TightenParams(survey_nodes=50, milp_time_limit=1.0),
        phase2=Phase2Params(init_iterations=5),
    )
    base.update(kw)
    return RunConfig(**base)


def test_time_gap_formula():
    assert time_gap(42.0, 0.0) == 42.0
    assert time_gap(3600.0, 0.1) == pytest.approx(3960.0)
    assert time_gap(0.0, 0.0) == 0.0


def test_config_invariant():
    with pytest.raises(ValueError, match="phase1_limit"):
        RunConfig(phase1_limit=100.0, total_limit=50.0)
    with pytest.raises(ValueError, match="mode"):
        RunConfig(mode="race")


def check_report_shape(rep, model):
    assert set(rep.seconds) == {"preprocess", "phase1", "phase2", "total"}
    assert rep.seconds["total"] == pytest.approx(
        rep.seconds["preprocess"] + rep.seconds["phase1"] + rep.seconds["phase2"])
    got = forward_ensemble(model, np.array(rep.x_scaled))
    assert rep.objective_scaled == pytest.approx(got, abs=1e-9)
    assert rep.objective_unscaled == pytest.approx(
        unscale_objective(model, got), abs=1e-6)
    if model.sense == "max":
        assert rep.bound_scaled >= rep.objective_scaled - 1e-6
    else:
        assert rep.bound_scaled <= rep.objective_scaled + 1e-6
    if rep.solved:
        assert rep.gap == 0.0
        assert rep.time_gap == pytest.approx(rep.seconds["total"])


def test_tiny_instance_solved_in_phase_one(rng):
    model = random_ensemble(rng, e=2, n_inputs=2, width=4, n_hidden_layers=1)
    rep = optimize_two_phase(model, quick_cfg())
    check_report_shape(rep, model)
    assert rep.solved
    assert rep.seconds["phase2"] == 0.0
    assert rep.nodes["phase2"] == 0
    _, value = enumerate_patterns_exact(model)
    assert rep.objective_scaled == pytest.approx(value, abs=1e-5)


def test_single_network_skips_phase_two(rng):
    model = random_ensemble(rng, e=1, n_inputs=2, width=5, n_hidden_layers=2)
    rep = optimize_two_phase(model, quick_cfg())
    check_report_shape(rep, model)
    assert rep.solved
    assert rep.nodes["phase2"] == 0 and rep.seconds["phase2"] == 0.0
    assert rep.instance["e"] == 1


def test_modes_agree_and_match_oracle(rng):
    for sense in ("max", "min"):
        model = random_ensemble(rng, e=2, n_inputs=2, width=4,
                                n_hidden_layers=1, sense=sense)
        rb = optimize_baseline(model, quick_cfg("baseline"))
        rt = optimize_two_phase(model, quick_cfg())
        check_report_shape(rb, model)
        check_report_shape(rt, model)
        assert rb.solved and rt.solved
        assert rb.objective_scaled == pytest.approx(rt.objective_scaled, abs=1e-5)
        _, value = enumerate_patterns_exact(model)
        assert rb.objective_scaled == pytest.approx(value, abs=1e-5)
        assert rb.cuts == 0


def test_forced_phase_two_handoff(rng):
    # zero phase-1 budget forces the handoff path and the spatial phase
    model = random_ensemble(rng, e=2, n_inputs=2, width=4, n_hidden_layers=1)
    cfg = quick_cfg(phase1_limit=0.0)
    rep = optimize_two_phase(model, cfg)
    check_report_shape(rep, model)
    assert rep.solved
    assert rep.nodes["phase2"] > 0
    _, value = enumerate_patterns_exact(model)
    assert rep.objective_scaled == pytest.approx(value, abs=1e-5)


def test_time_limited_run_reports_valid_bound(rng):
    model = random_ensemble(rng, e=2, n_inputs=3, width=10, n_hidden_layers=2)
    cfg = quick_cfg(phase1_limit=0.5, total_limit=1.0,
                    phase2=Phase2Params(init_iterations=1))
    rep = optimize_two_phase(model, cfg)
    check_report_shape(rep, model)
    if not rep.solved:
        assert rep.gap >= 0.0
        assert rep.time_gap >= rep.seconds["total"]
    assert rep.seconds["total"] <= 1.0 * 1.1 + 3.0  # generous slack for stage exits


def test_report_files(tmp_path, rng):
    model = random_ensemble(rng, e=2, n_inputs=2, width=3, n_hidden_layers=1)
    rep = optimize_baseline(model, quick_cfg("baseline"))
    rep.label = "tiny"
    jpath, cpath = tmp_path / "r.json", tmp_path / "r.csv"
    write_report_json(rep, jpath)
    write_report_csv(rep, cpath)

    d = json.loads(jpath.read_text())
    assert d["label"] == "tiny"
    assert d["gap_percent"] == pytest.approx(100.0 * rep.gap)
    assert d["objective_scaled"] == pytest.approx(rep.objective_scaled)

    with open(cpath, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 2 and len(rows[1]) == len(CSV_COLUMNS)
    assert rows[1][CSV_COLUMNS.index("solved")] == "1"
    assert report_csv_row(rep)[0] == "tiny"
