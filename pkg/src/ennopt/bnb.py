"""Best-first branch and bound over the binary columns of a MILP.

The engine is generic: it sees an LpProblem plus a list of binary columns and
knows nothing about networks. Hooks:

* ``on_integer_solution(milp, sol)`` fires at integer-feasible node optima and
  may return a list of globally valid cut rows ``(cols, vals, rhs)`` (all of
  the form a @ v <= rhs). Returned cuts are appended to the problem and the
  node is re-solved; an empty list accepts the point as an incumbent.
* ``on_node_fraction(milp, sol)`` fires at fractional node optima (used by the
  bound-tightening survey).

Nodes are ordered by parent bound (best first), branching picks the most
fractional binary (ties to the lowest column index), and children inherit the
parent basis so node LPs usually re-solve in a handful of pivots.
"""

import heapq
import logging
import time
from dataclasses import dataclass

import numpy as np

from .lp import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, LpError,
                 LpKernel)

log = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
PRUNE_TOL = 1e-9
CUT_POOL_MAX = 5_000
CUT_PURGE_EVERY = 500
CUT_BINDING_TOL = 1e-7


@dataclass
class BnbParams:
    time_limit: float = None
    node_limit: int = None
    trace_path: str = None


@dataclass
class Incumbent:
    """Best integer-feasible point found: full column vector plus objective."""

    x_full: np.ndarray
    objective: float


@dataclass
class SolveStats:
    status: str  # "optimal", "time_limit", "node_limit", "infeasible"
    nodes_processed: int
    lp_iterations: int
    wall_time: float
    best_bound: float
    best_objective: float
    gap: float
    cuts_added: int


def compute_gap(bound, objective):
    """Relative optimality gap, clamped at zero."""
    if not np.isfinite(bound) or not np.isfinite(objective):
        return np.inf
    return max(0.0, (bound - objective) / max(abs(objective), 1e-10))


class _Node:
    __slots__ = ("bound", "fixings", "basis", "depth", "retried")

    def __init__(self, bound, fixings, basis, depth, retried=False):
        self.bound = bound
        self.fixings = fixings
        self.basis = basis
        self.depth = depth
        self.retried = retried


def _frac(v):
    return min(v - np.floor(v), np.ceil(v) - v)


def solve_milp(milp, params=None, on_integer_solution=None, on_node_fraction=None):
    """Maximize milp.lp over its binary columns; returns (Incumbent, SolveStats).

    The problem sense must be "max"; callers wanting minimization negate the
    objective. Determinism: with a node limit instead of a time limit the node
    sequence is a pure function of the input.
    """
    if milp.lp.sense != "max":
        raise ValueError("solve_milp expects a maximization problem")
    params = params or BnbParams()
    t0 = time.monotonic()
    deadline = t0 + params.time_limit if params.time_limit is not None else None

    lp = milp.lp
    bins = np.asarray(milp.binary_cols, dtype=int)
    kernel = LpKernel(lp)
    trace = open(params.trace_path, "w") if params.trace_path else None
    if trace:
        trace.write("node,depth,action,lp_objective,global_bound,incumbent,open\n")

    incumbent = None
    inc_obj = -np.inf
    nodes = 0
    lp_iters = 0
    cuts_added = 0
    cut_rows = {}  # row id -> [age_node, binding_count]
    tie = 0
    status = "optimal"

    heap = []
    heapq.heappush(heap, (-np.inf, tie, _Node(np.inf, {}, None, 0)))

    def heap_bound():
        return -heap[0][0] if heap else -np.inf

    def note(action, node, obj):
        if trace:
            gb = max(inc_obj, heap_bound(), node.bound if node else -np.inf)
            trace.write("%d,%d,%s,%.12g,%.12g,%.12g,%d\n" % (
                nodes, node.depth if node else 0, action, obj, gb, inc_obj, len(heap)))

    try:
        while heap:
            if deadline is not None and time.monotonic() > deadline:
                status = "time_limit"
                break
            if params.node_limit is not None and nodes >= params.node_limit:
                status = "node_limit"
                break
            _, _, node = heapq.heappop(heap)
            if node.bound <= inc_obj + PRUNE_TOL:
                continue  # bound is stale relative to the incumbent
            nodes += 1

            lo = lp.lo.copy()
            hi = lp.hi.copy()
            for col, val in node.fixings.items():
                lo[col] = hi[col] = float(val)

            try:
                sol = kernel.solve(lo=lo, hi=hi, basis=node.basis)
            except LpError as exc:
                # treat a numerical breakdown like an iteration limit: retry
                # cold once, then branch blind on the parent bound
                log.warning("node %d LP breakdown: %s", nodes, exc)
                sol = None
            if sol is not None:
                lp_iters += sol.iterations
            if sol is not None and sol.status == INFEASIBLE:
                note("infeasible", node, np.nan)
                continue
            if sol is not None and sol.status == UNBOUNDED:
                raise RuntimeError("node relaxation is unbounded; model is malformed")
            if sol is None or sol.status == ITERATION_LIMIT:
                if not node.retried:
                    tie += 1
                    heapq.heappush(heap, (-node.bound, tie, _Node(
                        node.bound, node.fixings, None, node.depth, retried=True)))
                else:
                    # keep completeness: branch blind, children keep the parent bound
                    free = [c for c in bins if c not in node.fixings]
                    if free:
                        col = int(free[0])
                        for v in (0.0, 1.0):
                            tie += 1
                            fx = dict(node.fixings)
                            fx[col] = v
                            heapq.heappush(heap, (-node.bound, tie, _Node(
                                node.bound, fx, None, node.depth + 1)))
                note("lp_limit", node, np.nan)
                continue

            obj = sol.objective
            node_bound = min(node.bound, obj)

            for rid, rec in cut_rows.items():
                row = lp.rows[rid]
                if row.activity(sol.x) >= row.rhs - CUT_BINDING_TOL * (1 + abs(row.rhs)):
                    rec[1] += 1

            if obj <= inc_obj + PRUNE_TOL:
                note("pruned", node, obj)
                continue

            zvals = sol.x[bins] if bins.size else np.zeros(0)
            fracs = np.array([_frac(v) for v in zvals])
            if bins.size == 0 or np.max(fracs) <= INTEGRALITY_TOL:
                new_cuts = []
                if on_integer_solution is not None:
                    new_cuts = on_integer_solution(milp, sol) or []
                if new_cuts:
                    added = 0
                    for cols, vals, rhs in new_cuts:
                        if len(cut_rows) >= CUT_POOL_MAX:
                            break
                        rid = lp.add_row(cols, vals, "<=", rhs)
                        cut_rows[rid] = [nodes, 0]
                        added += 1
                    if added:
                        cuts_added += added
                        kernel = LpKernel(lp)
                        tie += 1
                        heapq.heappush(heap, (-node_bound, tie, _Node(
                            node_bound, node.fixings, sol.basis, node.depth)))
                        note("cuts", node, obj)
                        continue
                if obj > inc_obj:
                    incumbent = Incumbent(sol.x.copy(), obj)
                    inc_obj = obj
                note("integer", node, obj)
                continue

            if on_node_fraction is not None:
                on_node_fraction(milp, sol)

            # purge cuts that never bound anything, by disabling their rows
            if nodes % CUT_PURGE_EVERY == 0 and cut_rows:
                stale = [rid for rid, (age, hits) in cut_rows.items()
                         if hits == 0 and nodes - age >= CUT_PURGE_EVERY]
                if stale:
                    for rid in stale:
                        lp.rows[rid].rhs = 1e30
                        del cut_rows[rid]
                    kernel = LpKernel(lp)
                    log.debug("purged %d never-binding cuts", len(stale))

            best = np.flatnonzero(fracs >= np.max(fracs) - 1e-12)
            col = int(bins[best[0]])
            for v in (0.0, 1.0):
                tie += 1
                fx = dict(node.fixings)
                fx[col] = v
                heapq.heappush(heap, (-node_bound, tie, _Node(
                    node_bound, fx, sol.basis, node.depth + 1)))
            note("branched", node, obj)
    finally:
        if trace:
            trace.close()

    best_bound = max(inc_obj, heap_bound()) if heap else inc_obj
    if status == "optimal":
        if incumbent is None:
            status = "infeasible"
            best_bound = -np.inf
        else:
            best_bound = inc_obj
    gap = compute_gap(best_bound, inc_obj) if incumbent is not None else np.inf
    stats = SolveStats(
        status=status,
        nodes_processed=nodes,
        lp_iterations=lp_iters,
        wall_time=time.monotonic() - t0,
        best_bound=best_bound,
        best_objective=inc_obj if incumbent is not None else np.nan,
        gap=gap,
        cuts_added=cuts_added,
    )
    return incumbent, stats
