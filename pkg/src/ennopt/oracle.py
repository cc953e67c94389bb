"""Ground-truth solvers for desk-scale verification.

Pattern enumeration exploits piecewise linearity: once every hidden neuron is
pinned active or inactive, each preactivation is affine in the input, the
region where the pinning holds is a polyhedron, and the restricted problem is
an LP over the input alone. Enumerating the assignments of the unstable
neurons and keeping the best feasible LP optimum yields the exact global
optimum. The LPs are assembled straight from the weights and solved with
scipy, so none of this shares code with the solver being verified.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.optimize import linprog

from .model import forward_ensemble, forward_ensemble_batch

MAX_FREE_NEURONS = 20


def _stable_statuses(model, box_lo, box_hi):
    """Interval pass classifying each hidden neuron: +1 active, -1 inactive, 0 free."""
    status = {}
    for i, net in enumerate(model.networks):
        lo, hi = box_lo, box_hi
        for l, layer in enumerate(net.layers[:-1], start=2):
            Wp = np.maximum(layer.W, 0.0)
            Wn = np.minimum(layer.W, 0.0)
            h_lo = Wp @ lo + Wn @ hi + layer.b
            h_hi = Wp @ hi + Wn @ lo + layer.b
            for j in range(layer.n_out):
                status[(i, l, j)] = 1 if h_lo[j] >= 0 else (-1 if h_hi[j] <= 0 else 0)
            lo = np.maximum(h_lo, 0.0)
            hi = np.maximum(h_hi, 0.0)
    return status


def _pattern_lp(model, status, box_lo, box_hi):
    """Affine composition under a full activation assignment.

    Returns (obj_row, obj_const, A_ub, b_ub): the mean-output objective as an
    affine function of x and the half-space rows that pin the free neurons to
    their assigned side.
    """
    n = model.input_dim
    obj_row = np.zeros(n)
    obj_const = 0.0
    A_ub, b_ub = [], []
    e = model.n_networks
    for i, net in enumerate(model.networks):
        M = np.eye(n)
        v = np.zeros(n)
        for l, layer in enumerate(net.layers[:-1], start=2):
            H = layer.W @ M
            hv = layer.W @ v + layer.b
            keep = np.zeros(layer.n_out)
            for j in range(layer.n_out):
                st = status[(i, l, j)]
                if st == 1:
                    A_ub.append(-H[j])   # h >= 0
                    b_ub.append(hv[j])
                    keep[j] = 1.0
                else:
                    A_ub.append(H[j])    # h <= 0
                    b_ub.append(-hv[j])
            M = keep[:, None] * H
            v = keep * hv
        out = net.layers[-1]
        obj_row += (out.W @ M)[0] / e
        obj_const += float(out.W[0] @ v + out.b[0]) / e
    return obj_row, obj_const, np.array(A_ub), np.array(b_ub)


def enumerate_patterns_exact(model, box_lo=None, box_hi=None):
    """Exact optimum of the model by activation-pattern enumeration.

    Refuses models with more than MAX_FREE_NEURONS unstable neurons. Patterns
    whose region is empty are skipped; ties between patterns resolve to the
    lexicographically smallest assignment (inactive sorting first).
    """
    box_lo = model.box_lo if box_lo is None else np.asarray(box_lo, dtype=float)
    box_hi = model.box_hi if box_hi is None else np.asarray(box_hi, dtype=float)
    base = _stable_statuses(model, box_lo, box_hi)
    free = sorted(k for k, st in base.items() if st == 0)
    if len(free) > MAX_FREE_NEURONS:
        raise ValueError(
            "pattern enumeration supports at most %d free neurons, this model "
            "has %d inside the box" % (MAX_FREE_NEURONS, len(free)))

    sign = 1.0 if model.sense == "max" else -1.0
    bounds = list(zip(box_lo, box_hi))
    best_score = -np.inf
    best = None
    for bits in product((-1, 1), repeat=len(free)):
        status = dict(base)
        status.update(zip(free, bits))
        g, const, A_ub, b_ub = _pattern_lp(model, status, box_lo, box_hi)
        res = linprog(-sign * g, A_ub=A_ub if A_ub.size else None,
                      b_ub=b_ub if A_ub.size else None, bounds=bounds,
                      method="highs")
        if res.status != 0:
            continue
        value = float(g @ res.x + const)
        if sign * value > best_score + 1e-12:
            best_score = sign * value
            best = (np.asarray(res.x, dtype=float), value)
    assert best is not None, "every box point induces some pattern"
    return best


def grid_search(model, box_lo=None, box_hi=None, points_per_dim=11):
    """Best forward evaluation over a uniform grid; one point means the center."""
    box_lo = model.box_lo if box_lo is None else np.asarray(box_lo, dtype=float)
    box_hi = model.box_hi if box_hi is None else np.asarray(box_hi, dtype=float)
    if points_per_dim == 1:
        axes = [np.array([0.5 * (lo + hi)]) for lo, hi in zip(box_lo, box_hi)]
    else:
        axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(box_lo, box_hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vals = forward_ensemble_batch(model, pts)
    k = int(np.argmax(vals) if model.sense == "max" else np.argmin(vals))
    return pts[k].copy(), float(vals[k])


@dataclass
class Verdict:
    ok: bool
    failures: list = field(default_factory=list)
    recomputed: float = np.nan
    oracle_value: float = None


def verify_solution(model, report, tol=1e-6):
    """Audit a reported solution: recompute, box membership, oracle gap.

    `report` is a mapping or object exposing `x` and `objective`. The oracle
    comparison runs only when pattern enumeration is applicable.
    """
    if isinstance(report, dict):
        x = np.asarray(report["x"], dtype=float)
        objective = float(report["objective"])
    else:
        x = np.asarray(report.x, dtype=float)
        objective = float(report.objective)

    failures = []
    if np.any(x < model.box_lo - tol) or np.any(x > model.box_hi + tol):
        failures.append("box: reported point leaves the domain")
        verdict = Verdict(False, failures)
        return verdict

    value = forward_ensemble(model, np.clip(x, model.box_lo, model.box_hi))
    if abs(value - objective) > tol:
        failures.append("objective: recomputed %.9g, reported %.9g" % (value, objective))

    oracle_value = None
    base = _stable_statuses(model, model.box_lo, model.box_hi)
    if sum(1 for st in base.values() if st == 0) <= MAX_FREE_NEURONS:
        _, oracle_value = enumerate_patterns_exact(model)
        if abs(value - oracle_value) > tol:
            failures.append("oracle: optimum %.9g, reported point achieves %.9g"
                            % (oracle_value, value))
    return Verdict(not failures, failures, recomputed=float(value),
                   oracle_value=oracle_value)
