"""Bounded-variable revised simplex with warm starts and dual extraction.

The kernel solves

    max / min  c @ x   s.t.   rows:  a_r @ x  (<=, =, >=)  b_r,
                              bounds: lo <= x <= hi   (entries may be +-inf)

with one slack column per row, so duals and reduced costs come out positional:
``row_duals[r]`` belongs to row r and ``reduced_costs[j]`` to column j.

Implementation notes, in brief. Nonbasic variables rest on a bound (free ones
rest at zero and may move either way). Feasibility is restored by a composite
phase 1 that prices the total bound violation of the basic variables, which
works from an arbitrary starting basis and therefore doubles as the warm-start
repair after bound changes. Pricing is Dantzig with a Bland fallback after a
run of degenerate pivots. The basis inverse is kept explicitly and rebuilt
from an LU factorization (partial pivoting) every ``REFACTOR_EVERY`` pivots or
on numerical trouble.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

log = logging.getLogger(__name__)

MAX_ITERATIONS = 50_000
REFACTOR_EVERY = 100
BLAND_AFTER = 500  # consecutive degenerate pivots before Bland's rule kicks in

TOL_RC = 1e-9     # reduced-cost eligibility
TOL_FEAS = 1e-9   # bound-violation classification
TOL_PIVOT = 1e-8  # smallest acceptable pivot element
TOL_STEP = 1e-12  # steps below this count as degenerate

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

# nonbasic / basic column states
BASIC, AT_LO, AT_UP, NB_FREE = 0, 1, 2, 3


class LpError(RuntimeError):
    """Raised on persistent numerical failure (singular basis)."""


@dataclass
class Row:
    """One linear constraint, stored sparse: sum(vals * x[cols]) rel rhs."""

    cols: np.ndarray
    vals: np.ndarray
    rel: str  # "<=", "=", ">="
    rhs: float

    def __post_init__(self):
        self.cols = np.asarray(self.cols, dtype=int)
        self.vals = np.asarray(self.vals, dtype=float)
        if self.rel not in ("<=", "=", ">="):
            raise ValueError("bad relation %r" % (self.rel,))

    def activity(self, x):
        return float(self.vals @ x[self.cols])


@dataclass
class LpProblem:
    n_cols: int
    lo: np.ndarray
    hi: np.ndarray
    c: np.ndarray
    sense: str = "max"
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")

    def add_row(self, cols, vals, rel, rhs):
        self.rows.append(Row(cols, vals, rel, float(rhs)))
        return len(self.rows) - 1


@dataclass
class LpBasis:
    """Restart hint: basic column indices plus the nonbasic rest states."""

    basis: np.ndarray
    status: np.ndarray

    def copy(self):
        return LpBasis(self.basis.copy(), self.status.copy())


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray
    row_duals: np.ndarray
    reduced_costs: np.ndarray
    basis: LpBasis
    iterations: int


def _slack_bounds(rel):
    if rel == "<=":
        return 0.0, np.inf
    if rel == "=":
        return 0.0, 0.0
    return -np.inf, 0.0


class LpKernel:
    """Reusable solver state for one constraint matrix.

    Bound overrides and warm bases vary per solve, so branch-and-bound can
    keep one kernel per model and re-solve nodes cheaply. Appending rows
    requires a fresh kernel.
    """

    def __init__(self, prob):
        n = prob.n_cols
        self.prob = prob
        self.sign = 1.0 if prob.sense == "max" else -1.0

        kept, self.dropped = [], []
        for r, row in enumerate(prob.rows):
            if row.cols.size == 0 or not np.any(row.vals):
                self.dropped.append((r, row))  # empty row, checked at solve time
            else:
                kept.append((r, row))
        self.kept_ids = [r for r, _ in kept]
        m = len(kept)
        self.n, self.m = n, m

        self.A = np.zeros((m, n + m))
        self.b = np.zeros(m)
        base_lo = np.empty(n + m)
        base_hi = np.empty(n + m)
        base_lo[:n] = prob.lo
        base_hi[:n] = prob.hi
        for k, (_, row) in enumerate(kept):
            np.add.at(self.A[k], row.cols, row.vals)
            self.A[k, n + k] = 1.0
            self.b[k] = row.rhs
            base_lo[n + k], base_hi[n + k] = _slack_bounds(row.rel)
        self.base_lo, self.base_hi = base_lo, base_hi
        self.c_int = np.zeros(n + m)
        self.c_int[:n] = self.sign * prob.c

    # -- public ---------------------------------------------------------

    def solve(self, lo=None, hi=None, basis=None):
        """Solve with optional structural-bound overrides and a warm basis."""
        for _, row in self.dropped:
            if (
                (row.rel == "<=" and row.rhs < -TOL_FEAS)
                or (row.rel == "=" and abs(row.rhs) > TOL_FEAS)
                or (row.rel == ">=" and row.rhs > TOL_FEAS)
            ):
                return self._empty_row_infeasible()

        n, m = self.n, self.m
        self.lo = self.base_lo.copy()
        self.hi = self.base_hi.copy()
        if lo is not None:
            self.lo[:n] = lo
        if hi is not None:
            self.hi[:n] = hi

        self.iterations = 0
        self.degen_run = 0
        self.bland = False
        self.since_refactor = 0

        if basis is None or not self._init_from_hint(basis):
            self._init_slack_basis()

        status = self._phase1()
        if status is None:
            status = self._phase2()
        return self._extract(status)

    # -- starting bases --------------------------------------------------

    def _rest_status(self, j):
        if self.lo[j] > -np.inf:
            return AT_LO
        if self.hi[j] < np.inf:
            return AT_UP
        return NB_FREE

    def _rest_value(self, j, st):
        if st == AT_LO:
            return self.lo[j]
        if st == AT_UP:
            return self.hi[j]
        return 0.0

    def _init_slack_basis(self):
        n, m = self.n, self.m
        self.status = np.array([self._rest_status(j) for j in range(n)] + [BASIC] * m, dtype=np.int8)
        self.basis = np.arange(n, n + m)
        self.x = np.zeros(n + m)
        for j in range(n):
            self.x[j] = self._rest_value(j, self.status[j])
        self.Binv = np.eye(m)
        self._recompute_basic_values()

    def _init_from_hint(self, hint):
        n, m = self.n, self.m
        # copy: pivots mutate self.basis in place and the caller may reuse the
        # hint (branch and bound hands one parent basis to both children)
        basis = np.array(hint.basis, dtype=int)
        status = np.array(hint.status, dtype=np.int8)
        # a hint from a model with fewer rows is extended with the new slacks;
        # old slack columns keep their indices because rows only get appended
        if basis.size < m and status.size == n + basis.size:
            extra = np.arange(n + basis.size, n + m)
            basis = np.concatenate([basis, extra])
            status = np.concatenate([status, np.full(extra.size, BASIC, dtype=np.int8)])
        if basis.size != m or np.unique(basis).size != m or basis.min() < 0 or basis.max() >= n + m:
            log.debug("warm basis rejected (shape), cold start")
            return False
        if status.size != n + m:
            log.debug("warm basis rejected (status length), cold start")
            return False
        Binv = self._try_invert(basis)
        if Binv is None:
            log.debug("warm basis rejected (singular), cold start")
            return False
        self.basis = basis
        self.Binv = Binv
        self.status = status
        self.status[basis] = BASIC
        in_basis = np.zeros(n + m, dtype=bool)
        in_basis[basis] = True
        for j in np.flatnonzero(~in_basis & (self.status == BASIC)):
            self.status[j] = self._rest_status(j)  # stale BASIC marks
        self.x = np.zeros(n + m)
        for j in np.flatnonzero(self.status != BASIC):
            st = self.status[j]
            # repair states invalidated by bound changes
            if st == AT_LO and self.lo[j] == -np.inf:
                st = self._rest_status(j)
            elif st == AT_UP and self.hi[j] == np.inf:
                st = self._rest_status(j)
            elif st == NB_FREE and (self.lo[j] > -np.inf or self.hi[j] < np.inf):
                st = self._rest_status(j)
            self.status[j] = st
            self.x[j] = self._rest_value(j, st)
        self._recompute_basic_values()
        return True

    def _recompute_basic_values(self):
        xnb = self.x.copy()
        xnb[self.basis] = 0.0
        self.x[self.basis] = self.Binv @ (self.b - self.A @ xnb)

    def _try_invert(self, basis):
        """LU-based inverse of the basis matrix, or None if singular."""
        if basis.size == 0:
            return np.zeros((0, 0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                lu = lu_factor(self.A[:, basis])
            except (LinAlgError, ValueError):
                return None
            if np.min(np.abs(np.diag(lu[0]))) < 1e-12:
                return None
            Binv = lu_solve(lu, np.eye(basis.size))
        if not np.all(np.isfinite(Binv)):
            return None
        return Binv

    def _refactor(self):
        Binv = self._try_invert(self.basis)
        if Binv is None:
            raise LpError("singular basis after refactorization")
        self.Binv = Binv
        self.since_refactor = 0
        self._recompute_basic_values()

    # -- simplex core ------------------------------------------------------

    def _phase1(self):
        while True:
            xb = self.x[self.basis]
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            below = xb < lo_b - TOL_FEAS
            above = xb > hi_b + TOL_FEAS
            infeas = np.sum(np.where(below, lo_b - xb, 0.0)) + np.sum(np.where(above, xb - hi_b, 0.0))
            if infeas <= 1e-8:
                return None
            cb = np.where(below, 1.0, np.where(above, -1.0, 0.0))
            j, sigma, d_j = self._price(cb, np.zeros(self.n + self.m))
            if j is None:
                return INFEASIBLE
            stat = self._step(j, sigma, phase1=(below, above))
            if stat is not None:
                return stat

    def _phase2(self):
        while True:
            cb = self.c_int[self.basis]
            j, sigma, d_j = self._price(cb, self.c_int)
            if j is None:
                return OPTIMAL
            stat = self._step(j, sigma, phase1=None)
            if stat is not None:
                return stat

    def _price(self, cb, c_vec):
        y = cb @ self.Binv
        d = c_vec - y @ self.A
        st = self.status
        fixed = self.lo == self.hi
        up = (d > TOL_RC) & (((st == AT_LO) & ~fixed) | (st == NB_FREE))
        dn = (d < -TOL_RC) & (((st == AT_UP) & ~fixed) | (st == NB_FREE))
        if not (up.any() or dn.any()):
            return None, 0, 0.0
        if self.bland:
            cand = np.flatnonzero(up | dn)
            j = int(cand[0])
        else:
            score = np.where(up, d, 0.0) + np.where(dn, -d, 0.0)
            j = int(np.argmax(score))
        sigma = 1.0 if up[j] else -1.0
        return j, sigma, d[j]

    def _step(self, j, sigma, phase1):
        """One ratio test plus pivot or bound flip; returns a final status or None."""
        if self.iterations >= MAX_ITERATIONS:
            return ITERATION_LIMIT
        self.iterations += 1

        w = self.Binv @ self.A[:, j]
        move = -sigma * w  # rate of change of the basic values
        xb = self.x[self.basis]
        lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]

        t_rows = np.full(self.m, np.inf)
        target = np.zeros(self.m)  # bound hit by each candidate leaver
        pos = move > TOL_STEP
        neg = move < -TOL_STEP
        if phase1 is None:
            with np.errstate(invalid="ignore", divide="ignore"):
                t_hi = np.where(pos, (hi_b - xb) / move, np.inf)
                t_lo = np.where(neg, (lo_b - xb) / move, np.inf)
            t_rows = np.minimum(t_hi, t_lo)
            target = np.where(t_hi <= t_lo, hi_b, lo_b)
        else:
            below, above = phase1
            feas = ~(below | above)
            with np.errstate(invalid="ignore", divide="ignore"):
                # feasible basics must stay inside their bounds
                t_hi = np.where(feas & pos, (hi_b - xb) / move, np.inf)
                t_lo = np.where(feas & neg, (lo_b - xb) / move, np.inf)
                # violating basics stop at the bound they re-enter through
                t_in_lo = np.where(below & pos, (lo_b - xb) / move, np.inf)
                t_in_hi = np.where(above & neg, (hi_b - xb) / move, np.inf)
            stacked = np.vstack([t_hi, t_lo, t_in_lo, t_in_hi])
            choice = np.argmin(stacked, axis=0)
            t_rows = stacked[choice, np.arange(self.m)]
            bound_of = np.vstack([hi_b, lo_b, lo_b, hi_b])
            target = bound_of[choice, np.arange(self.m)]
        t_rows = np.maximum(t_rows, 0.0)

        t_flip = self.hi[j] - self.lo[j]  # inf unless both bounds finite
        t_min_rows = np.min(t_rows) if self.m else np.inf

        if t_min_rows == np.inf and not np.isfinite(t_flip):
            if phase1 is not None:
                raise LpError("phase-1 objective unbounded; numerical breakdown")
            return UNBOUNDED

        if t_flip <= t_min_rows:
            # bound flip, basis unchanged
            t = t_flip
            self.x[self.basis] = xb + move * t
            self.x[j] = self.hi[j] if sigma > 0 else self.lo[j]
            self.status[j] = AT_UP if sigma > 0 else AT_LO
            self._note_step(t)
            return None

        ties = np.flatnonzero(t_rows <= t_min_rows + 1e-9 * (1.0 + abs(t_min_rows)))
        if self.bland:
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(w[ties]))])
        if abs(w[r]) < TOL_PIVOT:
            usable = ties[np.abs(w[ties]) >= TOL_PIVOT]
            if usable.size:
                r = int(usable[np.argmax(np.abs(w[usable]))])
            else:
                self._refactor()
                w = self.Binv @ self.A[:, j]
                move = -sigma * w
                if np.max(np.abs(w[ties])) >= TOL_PIVOT:
                    r = int(ties[np.argmax(np.abs(w[ties]))])
                else:
                    # every tied row has a negligible pivot element, and their
                    # ratios are noise from dividing by those same elements.
                    # look a bounded distance past the window for a pivotable
                    # row; the cap keeps each skipped tiny row's bound
                    # overshoot below 1e-9.
                    window = t_min_rows + 1e-9 / TOL_PIVOT
                    cand = np.flatnonzero((np.abs(w) >= TOL_PIVOT)
                                          & (t_rows <= window))
                    if cand.size == 0:
                        raise LpError(
                            "no usable pivot element; persistent singularity")
                    t_best = float(np.min(t_rows[cand]))
                    near = cand[t_rows[cand] <= t_best + 1e-9 * (1.0 + abs(t_best))]
                    r = int(near[np.argmax(np.abs(w[near]))])

        t = float(t_rows[r])
        leaving = int(self.basis[r])
        self.x[self.basis] = xb + move * t
        self.x[j] += sigma * t
        self.x[leaving] = target[r]
        if self.lo[leaving] == self.hi[leaving]:
            self.status[leaving] = AT_LO
        else:
            self.status[leaving] = AT_LO if target[r] == lo_b[r] else AT_UP
        self.status[j] = BASIC
        self.basis[r] = j

        piv = w[r]
        col = self.Binv[r] / piv
        self.Binv -= np.outer(w, col)
        self.Binv[r] = col
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self._refactor()
        self._note_step(t)
        return None

    def _note_step(self, t):
        if t <= TOL_STEP:
            self.degen_run += 1
            if self.degen_run >= BLAND_AFTER and not self.bland:
                log.debug("switching to Bland's rule after %d degenerate pivots", self.degen_run)
                self.bland = True
        else:
            self.degen_run = 0
            self.bland = False

    # -- extraction --------------------------------------------------------

    def _extract(self, status):
        n, m = self.n, self.m
        x = self.x[:n].copy()
        obj_int = float(self.c_int[:n] @ x)
        y_int = self.c_int[self.basis] @ self.Binv if m else np.zeros(0)
        d_int = self.c_int[:n] - (y_int @ self.A[:, :n] if m else 0.0)

        n_rows = len(self.prob.rows)
        duals = np.zeros(n_rows)
        for k, rid in enumerate(self.kept_ids):
            duals[rid] = self.sign * y_int[k]
        sol = LpSolution(
            status=status,
            objective=self.sign * obj_int,
            x=x,
            row_duals=duals,
            reduced_costs=self.sign * d_int,
            basis=LpBasis(self.basis.copy(), self.status.copy()),
            iterations=self.iterations,
        )
        return sol

    def _empty_row_infeasible(self):
        n = self.n
        return LpSolution(
            status=INFEASIBLE,
            objective=np.nan,
            x=np.zeros(n),
            row_duals=np.zeros(len(self.prob.rows)),
            reduced_costs=np.zeros(n),
            basis=LpBasis(np.zeros(0, dtype=int), np.zeros(0, dtype=np.int8)),
            iterations=0,
        )


def solve_lp(prob, basis=None):
    """Solve an LpProblem from scratch (or from an optional basis hint)."""
    return LpKernel(prob).solve(basis=basis)


def warm_start_solve(prob, basis_hint):
    """Re-solve starting from a basis of a structurally identical problem.

    Invalid hints (wrong size, singular basis) fall back to a cold start; the
    returned solution is the same either way, only the pivot count differs.
    """
    return LpKernel(prob).solve(basis=basis_hint)


def row_activities(prob, x):
    """Row activity vector a_r @ x for each row, in row order."""
    return np.array([row.activity(x) for row in prob.rows])
