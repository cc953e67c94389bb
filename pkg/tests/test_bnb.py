from itertools import product
from types import SimpleNamespace

import numpy as np
import pytest

from ennopt.bnb import BnbParams, compute_gap, solve_milp
from ennopt.lp import OPTIMAL, LpKernel, LpProblem, solve_lp


def small_milp(c_bin, c_cont, rows, n_bin, n_cont, lo_cont, hi_cont):
    n = n_bin + n_cont
    lo = np.concatenate([np.zeros(n_bin), lo_cont])
    hi = np.concatenate([np.ones(n_bin), hi_cont])
    prob = LpProblem(n, lo, hi, np.concatenate([c_bin, c_cont]), "max")
    for cols, vals, rel, rhs in rows:
        prob.add_row(cols, vals, rel, rhs)
    return SimpleNamespace(lp=prob, binary_cols=list(range(n_bin)))


def brute_force(milp):
    """Enumerate binary assignments and solve the continuous rest."""
    best = -np.inf
    lp = milp.lp
    kern = LpKernel(lp)
    for bits in product([0.0, 1.0], repeat=len(milp.binary_cols)):
        lo = lp.lo.copy()
        hi = lp.hi.copy()
        for col, v in zip(milp.binary_cols, bits):
            lo[col] = hi[col] = v
        sol = kern.solve(lo=lo, hi=hi)
        if sol.status == OPTIMAL:
            best = max(best, sol.objective)
    return best


def test_knapsack_by_hand():
    milp = small_milp(
        c_bin=np.array([5.0, 4.0, 3.0]),
        c_cont=np.zeros(0),
        rows=[([0, 1, 2], [2.0, 3.0, 1.0], "<=", 3.0)],
        n_bin=3, n_cont=0, lo_cont=np.zeros(0), hi_cont=np.zeros(0),
    )
    inc, stats = solve_milp(milp)
    assert stats.status == "optimal"
    assert inc.objective == pytest.approx(8.0, abs=1e-9)
    assert np.allclose(inc.x_full[:3], [1, 0, 1], atol=1e-6)
    assert stats.gap == 0.0 and stats.best_bound == pytest.approx(8.0)


def test_matches_brute_force_on_random_mips(rng):
    for trial in range(15):
        n_bin = int(rng.integers(2, 7))
        n_cont = int(rng.integers(0, 3))
        rows = []
        for _ in range(int(rng.integers(1, 4))):
            cols = list(range(n_bin + n_cont))
            vals = rng.normal(size=len(cols))
            rows.append((cols, vals, "<=", float(rng.uniform(0.5, 2.0))))
        milp = small_milp(
            c_bin=rng.normal(size=n_bin),
            c_cont=rng.normal(size=n_cont),
            rows=rows,
            n_bin=n_bin, n_cont=n_cont,
            lo_cont=np.full(n_cont, -1.0), hi_cont=np.ones(n_cont),
        )
        inc, stats = solve_milp(milp)
        want = brute_force(milp)
        if not np.isfinite(want):
            assert stats.status == "infeasible"
        else:
            assert inc is not None
            assert inc.objective == pytest.approx(want, abs=1e-7 * (1 + abs(want)))


def test_pure_lp_passthrough(rng):
    milp = small_milp(
        c_bin=np.zeros(0), c_cont=np.array([1.0, 1.0]),
        rows=[([0, 1], [1.0, 1.0], "<=", 1.5)],
        n_bin=0, n_cont=2, lo_cont=np.zeros(2), hi_cont=np.ones(2),
    )
    inc, stats = solve_milp(milp)
    assert stats.nodes_processed == 1
    assert inc.objective == pytest.approx(1.5)


def test_infeasible_model_reports_it():
    milp = small_milp(
        c_bin=np.array([1.0]), c_cont=np.zeros(0),
        rows=[([0], [1.0], ">=", 2.0)],
        n_bin=1, n_cont=0, lo_cont=np.zeros(0), hi_cont=np.zeros(0),
    )
    inc, stats = solve_milp(milp)
    assert inc is None and stats.status == "infeasible"


def test_node_limit_and_determinism(rng):
    rows = []
    n_bin = 8
    vals = rng.uniform(1, 3, n_bin)
    rows.append((list(range(n_bin)), vals, "<=", float(vals.sum() / 2)))
    milp = small_milp(
        c_bin=rng.uniform(1, 2, n_bin), c_cont=np.zeros(0),
        rows=rows, n_bin=n_bin, n_cont=0, lo_cont=np.zeros(0), hi_cont=np.zeros(0),
    )
    inc1, st1 = solve_milp(milp, BnbParams(node_limit=5))
    assert st1.status in ("node_limit", "optimal")
    assert st1.nodes_processed <= 5
    assert st1.best_bound >= (inc1.objective if inc1 else -np.inf) - 1e-9

    full1 = solve_milp(milp)
    full2 = solve_milp(milp)
    assert full1[0].objective == full2[0].objective
    assert full1[1].nodes_processed == full2[1].nodes_processed
    assert full1[1].lp_iterations == full2[1].lp_iterations


def test_gap_formula_clamps():
    assert compute_gap(10.0, 10.0) == 0.0
    assert compute_gap(11.0, 10.0) == pytest.approx(0.1)
    assert compute_gap(9.999999, 10.0) == 0.0
    assert compute_gap(np.inf, 10.0) == np.inf
    assert compute_gap(1e-12, 0.0) == pytest.approx(1e-2)  # 1e-12 / 1e-10


def test_integer_callback_can_add_cuts(rng):
    milp = small_milp(
        c_bin=np.array([3.0, 2.0]), c_cont=np.zeros(0),
        rows=[([0, 1], [1.0, 1.0], "<=", 2.0)],
        n_bin=2, n_cont=0, lo_cont=np.zeros(0), hi_cont=np.zeros(0),
    )
    seen = []

    def cb(m, sol):
        if not seen:
            seen.append(sol.x[:2].copy())
            return [([0, 1], [1.0, 1.0], 1.0)]  # valid: optimum (1,1) costs 5 > cut allows
        return []

    inc, stats = solve_milp(milp, on_integer_solution=cb)
    # the cut removes (1,1); best remaining point is (1,0)
    assert stats.cuts_added == 1
    assert inc.objective == pytest.approx(3.0)


def test_fraction_callback_sees_fractional_points(rng):
    milp = small_milp(
        c_bin=np.array([1.0, 1.0, 1.0]), c_cont=np.zeros(0),
        rows=[([0, 1, 2], [2.0, 2.0, 2.0], "<=", 3.0)],
        n_bin=3, n_cont=0, lo_cont=np.zeros(0), hi_cont=np.zeros(0),
    )
    frac_points = []

    def on_frac(m, sol):
        z = sol.x[m.binary_cols]
        frac_points.append(z.copy())
        assert np.any((z > 1e-6) & (z < 1 - 1e-6))

    solve_milp(milp, on_node_fraction=on_frac)
    assert frac_points  # the root relaxation is fractional here


def test_trace_csv(tmp_path):
    milp = small_milp(
        c_bin=np.array([5.0, 4.0, 3.0]), c_cont=np.zeros(0),
        rows=[([0, 1, 2], [2.0, 3.0, 1.0], "<=", 3.0)],
        n_bin=3, n_cont=0, lo_cont=np.zeros(0), hi_cont=np.zeros(0),
    )
    path = tmp_path / "trace.csv"
    solve_milp(milp, BnbParams(trace_path=str(path)))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "node,depth,action,lp_objective,global_bound,incumbent,open"
    assert len(lines) > 1
