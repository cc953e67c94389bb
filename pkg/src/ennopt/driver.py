"""Run orchestration and reporting.

Two entry points produce the same report shape: ``optimize_baseline`` runs
LP-tightened big-M branch and bound in one piece, ``optimize_two_phase`` runs
the full pipeline (targeted bound tightening, a cut-strengthened big-M phase
under its own time limit, then the multiplier-priced spatial phase on the
remaining budget). Minimization is handled by flipping output layers once at
the door and recomputing reported values with the original model.
"""

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bnb import BnbParams, compute_gap, solve_milp
from .cuts import build_cut, extract_dual_point
from .formulation import build_bigm
from .model import as_maximization, forward_ensemble, unscale_input, unscale_objective
from .phase2 import Phase2Params, derive_z_map, phase_two_solve
from .tighten import TightenParams, lp_tighten_all, targeted_bounds

log = logging.getLogger(__name__)

SOLVED_GAP_TOL = 1e-9


@dataclass
class RunConfig:
    mode: str = "two_phase"  # "baseline" or "two_phase"
    phase1_limit: float = 180.0
    total_limit: float = 3600.0
    tighten: TightenParams = field(default_factory=TightenParams)
    phase2: Phase2Params = field(default_factory=Phase2Params)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("baseline", "two_phase"):
            raise ValueError("mode must be 'baseline' or 'two_phase'")
        if self.phase1_limit > self.total_limit:
            raise ValueError("phase1_limit exceeds total_limit")


@dataclass
class RunReport:
    instance: dict
    seconds: dict            # preprocess / phase1 / phase2 / total
    solved: bool
    objective_scaled: float  # mean output in the model's own sense, scaled units
    objective_unscaled: float
    bound_scaled: float      # best proven bound, same orientation as the objective
    gap: float               # fraction; rendered as percent in emitted reports
    nodes: dict              # per stage
    cuts: int
    time_gap: float
    x_scaled: list
    x_unscaled: list
    label: str = ""


def time_gap(t, gap):
    """Quality-adjusted time: t plus one full time limit per unit of gap."""
    return float(t) + 3600.0 * float(gap)


def _x_cols(milp, n):
    return [milp.col("x", j) for j in range(n)]


def _descriptor(model, cfg):
    widths = [l.W.shape[0] for l in model.networks[0].layers[:-1]]
    return {
        "n_inputs": model.input_dim,
        "e": model.n_networks,
        "hidden_widths": widths,
        "sense": model.sense,
        "mode": cfg.mode,
        "seed": cfg.seed,
    }


def _finish(model, cfg, x_scaled, bound_max, gap, solved, seconds, nodes, cuts,
            label=""):
    x_scaled = np.clip(np.asarray(x_scaled, dtype=float), model.box_lo, model.box_hi)
    obj_scaled = forward_ensemble(model, x_scaled)
    sign = 1.0 if model.sense == "max" else -1.0
    if solved:
        gap = 0.0
    seconds = dict(seconds)
    seconds["total"] = sum(seconds.values())
    return RunReport(
        instance=_descriptor(model, cfg),
        seconds=seconds,
        solved=bool(solved),
        objective_scaled=obj_scaled,
        objective_unscaled=unscale_objective(model, obj_scaled),
        bound_scaled=sign * bound_max,
        gap=float(gap),
        nodes=dict(nodes),
        cuts=int(cuts),
        time_gap=time_gap(seconds["total"], gap),
        x_scaled=[float(v) for v in x_scaled],
        x_unscaled=[float(v) for v in unscale_input(model, x_scaled)],
        label=label,
    )


def _solve_bigm(max_model, bounds, limit, with_cuts, audit=None):
    """One big-M branch-and-bound pass, optionally adding dual-point cuts at
    integer nodes (one per distinct binary assignment).

    When ``audit`` is a dict it receives the built model, every cut generated,
    and the incumbent column vector, for external validity checks.
    """
    milp = build_bigm(max_model, bounds)
    seen = set()
    generated = []

    def on_int(m, sol):
        z = tuple(float(round(v)) for v in sol.x[m.binary_cols])
        if z in seen:
            return []
        seen.add(z)
        dp = extract_dual_point(m, np.array(z), basis=sol.basis)
        if dp is None:
            return []
        cut = build_cut(dp, m)
        generated.append(cut)
        return [cut]

    inc, st = solve_milp(
        milp,
        BnbParams(time_limit=limit),
        on_integer_solution=on_int if with_cuts else None,
    )
    if audit is not None:
        audit["milp"] = milp
        audit["max_model"] = max_model
        audit["cuts"] = generated
        audit["incumbent_x_full"] = None if inc is None else inc.x_full.copy()
    return milp, inc, st


def optimize_baseline(model, cfg, audit=None):
    """LP-tightened big-M branch and bound on the whole ensemble, no cuts."""
    t0 = time.monotonic()
    max_model, _ = as_maximization(model)
    bounds = lp_tighten_all(max_model, max_workers=cfg.tighten.workers)
    t1 = time.monotonic()

    milp, inc, st = _solve_bigm(max_model, bounds,
                                max(cfg.total_limit - (t1 - t0), 0.0),
                                with_cuts=False, audit=audit)
    t2 = time.monotonic()

    if inc is not None:
        x = inc.x_full[_x_cols(milp, model.input_dim)]
    else:
        x = 0.5 * (model.box_lo + model.box_hi)
    return _finish(
        model, cfg, x, st.best_bound,
        gap=st.gap, solved=(st.status == "optimal"),
        seconds={"preprocess": t1 - t0, "phase1": t2 - t1, "phase2": 0.0},
        nodes={"phase1": st.nodes_processed, "phase2": 0}, cuts=st.cuts_added,
    )


def optimize_two_phase(model, cfg, audit=None):
    """Targeted tightening, then the cut phase, then the spatial phase.

    Single-network models have nothing to decompose, so the cut phase simply
    runs to the total limit and the spatial phase is skipped.
    """
    t0 = time.monotonic()
    deadline = t0 + cfg.total_limit
    max_model, _ = as_maximization(model)
    bounds, _tighten_report = targeted_bounds(max_model, cfg.tighten,
                                              deadline=deadline)
    t1 = time.monotonic()

    single = max_model.n_networks == 1
    p1_limit = deadline - t1 if single else min(cfg.phase1_limit, deadline - t1)
    milp, inc, st1 = _solve_bigm(max_model, bounds, max(p1_limit, 0.0),
                                 with_cuts=True, audit=audit)
    t2 = time.monotonic()
    nodes = {"phase1": st1.nodes_processed, "phase2": 0}
    seconds = {"preprocess": t1 - t0, "phase1": t2 - t1, "phase2": 0.0}

    center = 0.5 * (max_model.box_lo + max_model.box_hi)
    if inc is not None:
        x = inc.x_full[_x_cols(milp, model.input_dim)]
        start_value = inc.objective
        z_bar = milp.z_value_map(inc.x_full)
    else:
        x = center
        start_value = forward_ensemble(max_model, center)
        z_bar = derive_z_map(max_model, bounds, center)

    solved = st1.status == "optimal"
    bound_max = st1.best_bound
    gap = st1.gap
    remaining = deadline - time.monotonic()

    if not solved and not single and remaining > 0:
        params = dataclasses.replace(cfg.phase2, time_limit=remaining)
        inc2, st2 = phase_two_solve(max_model, bounds, params,
                                    x_start=x, start_value=start_value,
                                    z_bar=z_bar)
        seconds["phase2"] = time.monotonic() - t2
        nodes["phase2"] = st2.nodes_processed
        if inc2 is not None and inc2.objective >= start_value:
            x = inc2.x_full
        bound_max = min(bound_max, st2.best_bound)
        solved = st2.status == "optimal"
        gap = compute_gap(bound_max, max(start_value,
                                         inc2.objective if inc2 else -np.inf))

    return _finish(model, cfg, x, bound_max, gap=gap, solved=solved,
                   seconds=seconds, nodes=nodes, cuts=st1.cuts_added)


# -- emission ----------------------------------------------------------------

CSV_COLUMNS = [
    "label", "mode", "n_inputs", "e", "hidden_widths", "sense", "seed",
    "preprocess_s", "phase1_s", "phase2_s", "total_s", "solved",
    "objective_scaled", "objective_unscaled", "bound_scaled", "gap_percent",
    "nodes_phase1", "nodes_phase2", "cuts", "time_gap",
]


def _json_safe(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def report_to_dict(report):
    d = dataclasses.asdict(report)
    d["gap_percent"] = _json_safe(100.0 * report.gap)
    d["gap"] = _json_safe(d["gap"])
    d["bound_scaled"] = _json_safe(d["bound_scaled"])
    d["time_gap"] = _json_safe(d["time_gap"])
    return d


def write_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_csv_row(report):
    r, s = report, report.seconds
    return [
        r.label, r.instance["mode"], r.instance["n_inputs"], r.instance["e"],
        "x".join(str(w) for w in r.instance["hidden_widths"]),
        r.instance["sense"], r.instance["seed"],
        "%.3f" % s["preprocess"], "%.3f" % s["phase1"], "%.3f" % s["phase2"],
        "%.3f" % s["total"], int(r.solved),
        "%.9g" % r.objective_scaled, "%.9g" % r.objective_unscaled,
        "%.9g" % r.bound_scaled,
        "%.6g" % (100.0 * r.gap) if np.isfinite(r.gap) else "inf",
        r.nodes.get("phase1", 0), r.nodes.get("phase2", 0), r.cuts,
        "%.3f" % r.time_gap if np.isfinite(r.time_gap) else "inf",
    ]


def write_report_csv(report, path):
    """One header line fixing the column order, then one data row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerow(report_csv_row(report))
