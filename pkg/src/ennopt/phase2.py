"""Lagrangian decomposition with spatial branch and bound on the input box.

Duplicating the input per network and pricing the copy-equality constraints
with multipliers lam makes the ensemble separable: each network solves its
own small problem, and the sum of their optima upper-bounds the true optimum
for any lam. The tree branches on the coordinate where the per-network
argmax copies disagree most, shrinking every copy toward agreement; small
boxes fall back to the exact monolithic model, which is cheap there because
interval bounds over a small box freeze most neurons.
"""

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bnb import BnbParams, Incumbent, SolveStats, compute_gap, solve_milp
from .formulation import build_bigm, build_single_network_bigm
from .lp import OPTIMAL, INFEASIBLE, LpError, LpKernel
from .model import forward_ensemble, forward_trace
from .tighten import interval_bounds

log = logging.getLogger(__name__)

PRUNE_TOL = 1e-9


def local_bounds(model, bounds, box_lo, box_hi):
    """Root bounds sharpened by an interval pass over a sub-box.

    Both inputs are valid over the sub-box, so their intersection is too;
    small boxes freeze most neurons this way, which is what makes the spatial
    tree effective.
    """
    local = interval_bounds(model, box_lo, box_hi)
    for k in local.keys():
        local.set(k, max(local.lb(k), bounds.lb(k)),
                  min(local.ub(k), bounds.ub(k)))
    return local


@dataclass
class LagrangianMultipliers:
    """Copy-equality prices, row i for network i+2's deviation from network 1."""

    lam: np.ndarray  # shape (e - 1, n_inputs)

    @classmethod
    def zeros(cls, n_networks, n_inputs):
        return cls(np.zeros((n_networks - 1, n_inputs)))

    def copy(self):
        return LagrangianMultipliers(self.lam.copy())


@dataclass
class SubgradientState:
    step: float            # current step size
    q: int = 0             # completed updates
    max_init: int = 20     # initialization iteration budget

    def advance(self):
        """Shrink the step for the next update: step_q = step_{q-1} / sqrt(q)."""
        self.q += 1
        self.step = self.step / np.sqrt(self.q)
        return self.step


@dataclass
class SpatialNode:
    lo: np.ndarray
    hi: np.ndarray
    bound: float
    x_copies: np.ndarray   # shape (e, n_inputs)
    depth: int = 0
    fallback_done: bool = False


@dataclass
class Phase2Params:
    small_box_width: float = 0.02   # per-coordinate fallback threshold
    heuristic_radius: float = 0.02  # half-width of the primal heuristic box
    step_size0: float = 0.05
    init_iterations: int = 20
    time_limit: float = None
    subproblem_time_limit: float = 10.0   # per-node per-network MILP cap
    heuristic_time_limit: float = 5.0
    trace_path: str = None


def _objective_vectors(model, lam):
    """Per-network extra x objective implementing the priced copy constraints."""
    vecs = [lam.lam.sum(axis=0)]
    for i in range(1, model.n_networks):
        vecs.append(-lam.lam[i - 1])
    return vecs


def solve_lag_relaxation(model, bounds, lam, box_lo=None, box_hi=None,
                         z_fixed=None, time_limit=None, counters=None):
    """Sum of the e decoupled single-network optima under multipliers lam.

    Returns (bound, x_copies). With z_fixed (a map from free neuron key to
    0/1) each subproblem is a single LP; otherwise each is a MILP whose dual
    bound is used, so an interrupted solve stays valid. A None bound means
    some subproblem was infeasible and the node dies. `counters` is an
    optional dict accumulating "lp_iterations".
    """
    box_lo = model.box_lo if box_lo is None else np.asarray(box_lo, dtype=float)
    box_hi = model.box_hi if box_hi is None else np.asarray(box_hi, dtype=float)
    n = model.input_dim

    def count(k):
        if counters is not None:
            counters["lp_iterations"] = counters.get("lp_iterations", 0) + k

    total = 0.0
    copies = np.empty((model.n_networks, n))
    center = 0.5 * (box_lo + box_hi)
    nb = local_bounds(model, bounds, box_lo, box_hi)
    for i, extra in enumerate(_objective_vectors(model, lam)):
        milp = build_single_network_bigm(model, i, nb, box_lo, box_hi,
                                         extra_x_objective=extra)
        x_cols = [milp.col("x", j) for j in range(n)]
        if z_fixed is not None:
            lo = milp.lp.lo.copy()
            hi = milp.lp.hi.copy()
            for fn in milp.free_neurons:
                lo[fn.z_col] = hi[fn.z_col] = z_fixed[fn.key]
            try:
                sol = LpKernel(milp.lp).solve(lo=lo, hi=hi)
            except LpError as exc:
                log.warning("fixed-z relaxation breakdown: %s", exc)
                return None, None
            count(sol.iterations)
            if sol.status != OPTIMAL:
                return None, None
            total += sol.objective
            copies[i] = sol.x[x_cols]
        else:
            inc, stats = solve_milp(milp, BnbParams(time_limit=time_limit))
            count(stats.lp_iterations)
            if stats.status == "infeasible":
                return None, None
            total += stats.best_bound
            copies[i] = inc.x_full[x_cols] if inc is not None else center
    return total, copies


def update_multipliers(lam, state, x_copies):
    """One subgradient step from the copy disagreements (no-op when they agree)."""
    step = state.advance()
    g = x_copies[0][None, :] - x_copies[1:]
    lam.lam -= step * g
    return lam


def subgradient_init(model, bounds, z_bar, params, box_lo=None, box_hi=None,
                     deadline=None):
    """Multiplier warm-up: init_iterations LP rounds with the binaries frozen.

    z_bar comes from an integer-feasible point, so the fixed LPs are feasible
    by construction. Returns (multipliers, state) so the tree search can keep
    stepping the same schedule.
    """
    lam = LagrangianMultipliers.zeros(model.n_networks, model.input_dim)
    state = SubgradientState(step=params.step_size0, max_init=params.init_iterations)
    for _ in range(params.init_iterations):
        if deadline is not None and time.monotonic() >= deadline:
            break
        bound, copies = solve_lag_relaxation(model, bounds, lam, box_lo,
                                             box_hi, z_fixed=z_bar)
        if bound is None:
            log.warning("fixed-z relaxation infeasible during multiplier warm-up")
            break
        update_multipliers(lam, state, copies)
    return lam, state


def derive_z_map(model, bounds, x):
    """Activation bits at x for every neuron the bounds leave free."""
    z = {}
    for i, net in enumerate(model.networks):
        h_list, _ = forward_trace(net, x)
        for l, h in enumerate(h_list[:len(net.layers) - 1], start=2):
            for j in range(h.shape[0]):
                if bounds.status((i, l, j)) == "free":
                    z[(i, l, j)] = 1.0 if h[j] > 0 else 0.0
    return z


def select_branch_and_split(node):
    """Coordinate of maximum copy disagreement and the two half-boxes."""
    spread = node.x_copies.max(axis=0) - node.x_copies.min(axis=0)
    j = int(np.argmax(spread))
    m = 0.5 * (node.x_copies[:, j].max() + node.x_copies[:, j].min())
    left_lo, left_hi = node.lo.copy(), node.hi.copy()
    right_lo, right_hi = node.lo.copy(), node.hi.copy()
    left_hi[j] = m
    right_lo[j] = m
    return j, (left_lo, left_hi), (right_lo, right_hi)


def small_domain_check(node, width):
    return bool(np.all(node.hi - node.lo <= width + 1e-12))


def primal_heuristic(model, bounds, x1_hat, radius, box_lo=None, box_hi=None,
                     time_limit=5.0):
    """Maximize network 1 near its own argmax, then score the full ensemble.

    The sub-box is the radius ball around x1_hat clipped to the root box. Any
    outcome is feasible, so the value is always a valid incumbent candidate.
    """
    box_lo = model.box_lo if box_lo is None else np.asarray(box_lo, dtype=float)
    box_hi = model.box_hi if box_hi is None else np.asarray(box_hi, dtype=float)
    x1_hat = np.clip(np.asarray(x1_hat, dtype=float), box_lo, box_hi)
    if radius <= 0.0:
        return x1_hat, forward_ensemble(model, x1_hat)
    lo = np.maximum(box_lo, x1_hat - radius)
    hi = np.minimum(box_hi, x1_hat + radius)
    milp = build_single_network_bigm(model, 0, local_bounds(model, bounds, lo, hi),
                                     lo, hi)
    inc, _ = solve_milp(milp, BnbParams(time_limit=time_limit))
    x = x1_hat
    if inc is not None:
        x = inc.x_full[[milp.col("x", j) for j in range(model.input_dim)]]
        x = np.clip(x, lo, hi)
    return x, forward_ensemble(model, x)


def phase_two_solve(model, bounds, params, x_start=None, start_value=None,
                    z_bar=None):
    """Best-first spatial branch and bound; returns (Incumbent, SolveStats).

    The incumbent's x_full is the input point itself (phase-two nodes carry
    no LP column space). Requires a maximization model with e >= 2 networks.
    """
    if model.n_networks < 2:
        raise ValueError("phase two applies only to ensembles of two or more "
                         "networks; run the monolithic model instead")
    if model.sense != "max":
        raise ValueError("phase_two_solve expects a maximization model")
    t0 = time.monotonic()
    deadline = t0 + params.time_limit if params.time_limit is not None else None
    trace = open(params.trace_path, "w") if params.trace_path else None
    if trace:
        trace.write("node,action,max_width,bound,incumbent\n")

    inc_x = None
    inc_val = -np.inf
    if x_start is not None:
        inc_x = np.clip(np.asarray(x_start, dtype=float), model.box_lo, model.box_hi)
        inc_val = forward_ensemble(model, inc_x)
    if z_bar is None:
        z_bar = derive_z_map(model, bounds,
                             inc_x if inc_x is not None
                             else 0.5 * (model.box_lo + model.box_hi))

    lam, state = subgradient_init(model, bounds, z_bar, params, deadline=deadline)

    nodes = 0
    counters = {"lp_iterations": 0}
    status = "optimal"
    heap = []
    tie = 0

    def remaining():
        if deadline is None:
            return params.subproblem_time_limit
        return min(params.subproblem_time_limit, max(0.1, deadline - time.monotonic()))

    root_bound, root_copies = solve_lag_relaxation(
        model, bounds, lam, time_limit=remaining(), counters=counters)
    if root_bound is not None:
        heapq.heappush(heap, (-root_bound, 0, tie,
                              SpatialNode(model.box_lo.copy(), model.box_hi.copy(),
                                          root_bound, root_copies)))

    def note(action, node):
        if trace:
            trace.write("%d,%s,%.6g,%.12g,%.12g\n" % (
                nodes, action, float(np.max(node.hi - node.lo)), node.bound, inc_val))

    while heap:
        if deadline is not None and time.monotonic() >= deadline:
            status = "time_limit"
            break
        neg_bound, _, _, node = heapq.heappop(heap)
        if -neg_bound <= inc_val + PRUNE_TOL:
            # best-first: every remaining node is at most this bound
            heap = []
            break
        nodes += 1

        hx, hv = primal_heuristic(model, bounds, node.x_copies[0],
                                  params.heuristic_radius,
                                  time_limit=min(params.heuristic_time_limit,
                                                 remaining()))
        if hv > inc_val:
            inc_x, inc_val = hx, hv

        update_multipliers(lam, state, node.x_copies)

        spread = float(np.max(node.x_copies.max(axis=0) - node.x_copies.min(axis=0)))
        if spread == 0.0 and not small_domain_check(node, params.small_box_width):
            x_common = np.clip(node.x_copies[0], node.lo, node.hi)
            v = forward_ensemble(model, x_common)
            if v > inc_val:
                inc_x, inc_val = x_common, v

        if small_domain_check(node, params.small_box_width) or spread == 0.0:
            cap = remaining() if deadline is not None else None
            milp = build_bigm(model, local_bounds(model, bounds, node.lo, node.hi),
                              box_lo=node.lo, box_hi=node.hi)
            inc_m, st_m = solve_milp(milp, BnbParams(time_limit=cap))
            counters["lp_iterations"] += st_m.lp_iterations
            if inc_m is not None:
                x_cols = [milp.col("x", j) for j in range(model.input_dim)]
                x = np.clip(inc_m.x_full[x_cols], node.lo, node.hi)
                v = forward_ensemble(model, x)
                if v > inc_val:
                    inc_x, inc_val = x, v
            if st_m.status != "optimal" and not node.fallback_done:
                nb = min(node.bound, st_m.best_bound)
                tie += 1
                heapq.heappush(heap, (-nb, node.depth, tie, SpatialNode(
                    node.lo, node.hi, nb, node.x_copies, node.depth, True)))
            note("bigm-fallback", node)
            continue

        _, (llo, lhi), (rlo, rhi) = select_branch_and_split(node)
        for clo, chi in ((llo, lhi), (rlo, rhi)):
            b, copies = solve_lag_relaxation(model, bounds, lam, clo, chi,
                                             time_limit=remaining(),
                                             counters=counters)
            if b is None:
                continue
            b = min(b, node.bound)  # parent bound stays valid on the child box
            if b <= inc_val + PRUNE_TOL:
                continue
            tie += 1
            heapq.heappush(heap, (-b, node.depth + 1, tie,
                                  SpatialNode(clo, chi, b, copies, node.depth + 1)))
        note("branched", node)

    if trace:
        trace.close()

    open_bound = max((-h[0] for h in heap), default=-np.inf)
    best_bound = max(inc_val, open_bound) if heap else inc_val
    if status == "optimal" and inc_x is None:
        status = "infeasible"
    gap = compute_gap(best_bound, inc_val) if inc_x is not None else np.inf
    stats = SolveStats(status=status, nodes_processed=nodes,
                       lp_iterations=counters["lp_iterations"],
                       wall_time=time.monotonic() - t0, best_bound=best_bound,
                       best_objective=inc_val if inc_x is not None else np.nan,
                       gap=gap, cuts_added=0)
    incumbent = Incumbent(inc_x, inc_val) if inc_x is not None else None
    return incumbent, stats
