"""Valid inequalities from LP dual points at integer activation assignments.

Fixing the binary vector z turns the big-M model into an LP whose optimal
value A(z) is, by duality, bounded above by an affine function of z built
from any feasible dual point. Extracting the duals at an integer z_bar and
folding every z-independent dual contribution into a single constant gives
the inequality

    obj(v)  <=  sum_r b_r pi_r  +  sum_k |LB_k| (1 - z_k) alpha_k
                                +  sum_k UB_k z_k beta_k  +  C

which holds for every feasible (v, z) and holds with equality at the
generator. Here pi are the duals of the affine rows h - W y = b, alpha the
duals of the upper big-M rows y - h + |LB| z <= |LB|, beta the duals of the
capacity rows y - UB z <= 0, the sums over free neurons only, and C collects
the duals of every other row and of the column bounds. C is recovered as
obj* - A(z_bar) instead of being assembled term by term, which is exact at
the generator by strong duality.
"""

from dataclasses import dataclass, field

import numpy as np

from .lp import OPTIMAL, LpError, LpKernel

CUT_TOL = 1e-6


@dataclass
class DualPoint:
    """Duals backing one inequality, keyed by free-neuron key (i, l, j)."""

    z_bar: tuple                 # generating binary assignment, by binary col order
    objective: float             # LP optimum with z fixed at z_bar
    pi_b: float                  # sum of rhs * dual over the affine rows
    alpha: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    constant: float = 0.0        # folded z-independent dual mass


def extract_dual_point(milp, z_bar, kernel=None, basis=None):
    """Solve the LP with z fixed at z_bar and collect (pi, alpha, beta).

    Returns None when that LP is infeasible or otherwise fails, which tells
    the caller to drop the candidate. z_bar is ordered like milp.binary_cols.
    """
    lp = milp.lp
    z_bar = np.asarray(z_bar, dtype=float)
    lo = lp.lo.copy()
    hi = lp.hi.copy()
    for col, v in zip(milp.binary_cols, z_bar):
        lo[col] = hi[col] = float(round(v))
    kernel = kernel or LpKernel(lp)
    try:
        sol = kernel.solve(lo=lo, hi=hi, basis=basis)
    except LpError:
        return None
    if sol.status != OPTIMAL:
        return None

    dp = DualPoint(z_bar=tuple(float(round(v)) for v in z_bar), objective=sol.objective,
                   pi_b=0.0)
    for (kind, *key), rid in milp.row_index.items():
        if kind == "const3":
            dp.pi_b += lp.rows[rid].rhs * sol.row_duals[rid]
    affine = dp.pi_b
    for fn in milp.free_neurons:
        a = sol.row_duals[fn.const4b_row]
        b = sol.row_duals[fn.const5b_row]
        dp.alpha[fn.key] = a
        dp.beta[fn.key] = b
    zmap = dict(zip(milp.binary_cols, dp.z_bar))
    for fn in milp.free_neurons:
        affine += abs(fn.lb) * (1.0 - zmap[fn.z_col]) * dp.alpha[fn.key]
        affine += fn.ub * zmap[fn.z_col] * dp.beta[fn.key]
    dp.constant = sol.objective - affine
    return dp


def build_cut(dp, milp):
    """Assemble the inequality as a row (cols, vals, rhs) over obj and z columns.

    The left side carries the model objective verbatim (binary columns take
    no objective weight in this model) plus |LB| alpha - UB beta on each free
    z; everything constant sits on the right.
    """
    lp = milp.lp
    cols = []
    vals = []
    for c in np.flatnonzero(lp.c):
        cols.append(int(c))
        vals.append(float(lp.c[c]))
    rhs = dp.pi_b + dp.constant
    for fn in milp.free_neurons:
        a = dp.alpha.get(fn.key, 0.0)
        b = dp.beta.get(fn.key, 0.0)
        rhs += abs(fn.lb) * a
        coef = abs(fn.lb) * a - fn.ub * b
        if coef != 0.0:
            cols.append(fn.z_col)
            vals.append(coef)
    return cols, vals, rhs


def cut_activity(cut, x):
    cols, vals, _ = cut
    return float(np.dot(vals, x[list(cols)]))


def check_cut_validity(cut, solution):
    """True when the full solution vector satisfies the row within 1e-6."""
    cols, vals, rhs = cut
    return cut_activity(cut, solution) <= rhs + CUT_TOL
