"""Neuron bounds: interval propagation, LP tightening, and targeted MILPs.

Bounds refer to the preactivation h of each hidden neuron and drive the big-M
constants of the encoding, so tighter is strictly better. The stages form a
chain, each intersected with the previous one:

    interval  >=  LP-tightened  >=  MILP-tightened (critical neurons only)

The survey stage runs a node-limited branch and bound and accumulates, per
free neuron, the relaxation discrepancy delta = y - max(0, h) observed at
fractional node optima; neurons whose mean discrepancy exceeds a threshold
are the critical ones worth two exact (time-capped) MILP solves each.
"""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bnb import BnbParams, solve_milp
from .formulation import build_bigm, build_bound_subproblem
from .lp import OPTIMAL, solve_lp

log = logging.getLogger(__name__)


@dataclass
class TightenParams:
    survey_nodes: int = 1000       # node budget of the discrepancy survey
    criticality_threshold: float = 0.01  # mean-discrepancy cut-off
    milp_time_limit: float = 5.0   # per bound MILP, seconds
    workers: int = 1               # thread pool width for the LP stage


class NeuronBounds:
    """Per-hidden-neuron preactivation bounds, keyed by (network, layer, neuron)."""

    def __init__(self, data=None):
        self.data = dict(data) if data else {}

    def lb(self, key):
        return self.data[key][0]

    def ub(self, key):
        return self.data[key][1]

    def set(self, key, lb, ub):
        if lb > ub:
            lb = ub = 0.5 * (lb + ub)  # bounds can only cross by rounding noise
        self.data[key] = (float(lb), float(ub))

    def status(self, key):
        lb, ub = self.data[key]
        if ub <= 0.0:
            return "always_inactive"
        if lb >= 0.0:
            return "always_active"
        return "free"

    def keys(self):
        return sorted(self.data.keys())

    def copy(self):
        return NeuronBounds(self.data)

    def n_free(self):
        return sum(1 for k in self.data if self.status(k) == "free")

    def contains(self, other):
        """True if every interval of `other` lies inside this one (tolerant)."""
        for k, (lb, ub) in self.data.items():
            olb, oub = other.data[k]
            if olb < lb - 1e-9 or oub > ub + 1e-9:
                return False
        return True


@dataclass
class DiscrepancyLedger:
    sums: dict = field(default_factory=dict)
    surveyed_nodes: int = 0

    def mean(self, key):
        return self.sums.get(key, 0.0) / max(1, self.surveyed_nodes)


def interval_bounds(model, box_lo=None, box_hi=None):
    """Layerwise interval propagation from the box.

    First-hidden-layer bounds come straight from the box; deeper layers
    propagate the clipped output ranges [max(0, lb), max(0, ub)] of the layer
    before, splitting each weight into its positive and negative part.
    """
    box_lo = model.box_lo if box_lo is None else np.asarray(box_lo, dtype=float)
    box_hi = model.box_hi if box_hi is None else np.asarray(box_hi, dtype=float)
    nb = NeuronBounds()
    for i, net in enumerate(model.networks):
        prev_lo, prev_hi = box_lo, box_hi
        for l in range(2, len(net.layers) + 1):  # hidden layers only
            layer = net.layers[l - 2]
            Wp = np.maximum(layer.W, 0.0)
            Wn = np.minimum(layer.W, 0.0)
            h_lo = Wp @ prev_lo + Wn @ prev_hi + layer.b
            h_hi = Wp @ prev_hi + Wn @ prev_lo + layer.b
            for j in range(layer.n_out):
                nb.set((i, l, j), h_lo[j], h_hi[j])
            prev_lo = np.maximum(h_lo, 0.0)
            prev_hi = np.maximum(h_hi, 0.0)
    return nb


def _lp_bound_pair(model, key, bounds):
    ub_m = build_bound_subproblem(model, key, "max", True, bounds)
    lb_m = build_bound_subproblem(model, key, "min", True, bounds)
    s_ub = solve_lp(ub_m.lp)
    s_lb = solve_lp(lb_m.lp)
    if s_ub.status != OPTIMAL or s_lb.status != OPTIMAL:
        return None  # keep the incoming interval for this neuron
    return -s_lb.objective, s_ub.objective


def lp_tighten_all(model, start=None, max_workers=1):
    """Tighten every hidden neuron with two LP relaxations, layer by layer.

    Layer order matters: tightened bounds of layer l feed the subproblems of
    layer l+1. Within a layer the solves are independent and may run on a
    thread pool; results are merged in neuron order either way.
    """
    bounds = (start or interval_bounds(model)).copy()
    by_layer = {}
    for key in bounds.keys():
        by_layer.setdefault(key[1], []).append(key)
    for l in sorted(by_layer):
        keys = by_layer[l]
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(lambda k: _lp_bound_pair(model, k, bounds), keys))
        else:
            results = [_lp_bound_pair(model, k, bounds) for k in keys]
        for key, res in zip(keys, results):
            if res is None:
                continue
            lb, ub = res
            bounds.set(key, max(bounds.lb(key), lb), min(bounds.ub(key), ub))
    return bounds


def survey_discrepancies(model, bounds, params):
    """Node-limited run of the full model accumulating per-neuron discrepancy.

    Returns (ledger, stats); stats.status == "optimal" means the survey run
    already solved the instance and the MILP stage has nothing left to do.
    """
    milp = build_bigm(model, bounds)
    ledger = DiscrepancyLedger()

    def on_frac(m, sol):
        for fn in m.free_neurons:
            h = sol.x[fn.h_col]
            y = sol.x[fn.y_col]
            delta = y if h < 0 else y - h
            ledger.sums[fn.key] = ledger.sums.get(fn.key, 0.0) + delta

    _, stats = solve_milp(milp, BnbParams(node_limit=params.survey_nodes),
                          on_node_fraction=on_frac)
    ledger.surveyed_nodes = stats.nodes_processed
    return ledger, stats


def select_critical(ledger, params):
    """Neurons whose mean surveyed discrepancy reaches the threshold."""
    return sorted(k for k in ledger.sums
                  if ledger.mean(k) >= params.criticality_threshold)


def milp_tighten_critical(model, bounds, critical, params, deadline=None):
    """Two exact bound MILPs per critical neuron, intersected with the input.

    Each solve is capped at params.milp_time_limit; an interrupted solve still
    yields a valid bound through the solver's best dual bound. Neurons are
    processed in layer order so earlier tightenings feed later subproblems.
    """
    new = bounds.copy()
    for key in sorted(critical, key=lambda k: (k[1], k[0], k[2])):
        if deadline is not None and time.monotonic() >= deadline:
            log.info("bound MILP budget exhausted before %s", (key,))
            break
        cap = params.milp_time_limit
        if deadline is not None:
            cap = min(cap, deadline - time.monotonic())
        ub_m = build_bound_subproblem(model, key, "max", False, new)
        _, st_ub = solve_milp(ub_m, BnbParams(time_limit=cap))
        lb_m = build_bound_subproblem(model, key, "min", False, new)
        _, st_lb = solve_milp(lb_m, BnbParams(time_limit=cap))
        ub = st_ub.best_bound if np.isfinite(st_ub.best_bound) else new.ub(key)
        lb = -st_lb.best_bound if np.isfinite(st_lb.best_bound) else new.lb(key)
        new.set(key, max(new.lb(key), lb), min(new.ub(key), ub))
    return new


def targeted_bounds(model, params=None, deadline=None):
    """Full pipeline: interval, LP tightening, survey, targeted MILPs.

    Returns (bounds, report) where the report collects the per-stage bounds
    and counters for the bounds CSV and the run report.
    """
    params = params or TightenParams()
    t0 = time.monotonic()
    iv = interval_bounds(model)
    t1 = time.monotonic()
    lp_b = lp_tighten_all(model, start=iv, max_workers=params.workers)
    t2 = time.monotonic()
    critical = []
    final = lp_b
    surveyed = 0
    if lp_b.n_free() > 0 and (deadline is None or time.monotonic() < deadline):
        ledger, stats = survey_discrepancies(model, lp_b, params)
        surveyed = ledger.surveyed_nodes
        if stats.status != "optimal":
            critical = select_critical(ledger, params)
            final = milp_tighten_critical(model, lp_b, critical, params, deadline)
        else:
            log.info("survey solved the instance; no neuron is critical")
    t3 = time.monotonic()
    report = {
        "interval": iv,
        "lp": lp_b,
        "final": final,
        "critical": critical,
        "surveyed_nodes": surveyed,
        "seconds": {
            "interval": t1 - t0,
            "lp": t2 - t1,
            "survey_and_milp": t3 - t2,
            "total": t3 - t0,
        },
        "n_free": {"interval": iv.n_free(), "lp": lp_b.n_free(), "final": final.n_free()},
    }
    return final, report


def write_bounds_csv(path, report):
    """Per-neuron CSV of the three bound stages and the final status."""
    iv, lp_b, fin = report["interval"], report["lp"], report["final"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([
            "network", "layer", "neuron",
            "interval_lb", "interval_ub", "lp_lb", "lp_ub",
            "final_lb", "final_ub", "status",
        ])
        for key in fin.keys():
            i, l, j = key
            w.writerow([
                i, l, j,
                "%.12g" % iv.lb(key), "%.12g" % iv.ub(key),
                "%.12g" % lp_b.lb(key), "%.12g" % lp_b.ub(key),
                "%.12g" % fin.lb(key), "%.12g" % fin.ub(key),
                fin.status(key),
            ])
