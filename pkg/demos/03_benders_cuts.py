"""Dual-point inequalities: how one fixed activation assignment bounds all.

Fixing the binaries z of the big-M model leaves an LP; its duals give an
affine function of z that upper-bounds the objective everywhere and touches
it at the generating assignment. This enumerates every assignment of a tiny
ensemble to show both properties, then lets the branch-and-bound use the
inequalities as lazy cuts.
"""

from itertools import product

import numpy as np

from ennopt.bnb import solve_milp
from ennopt.cuts import build_cut, check_cut_validity, extract_dual_point
from ennopt.formulation import build_bigm
from ennopt.lp import OPTIMAL, LpKernel
from ennopt.model import EnsembleModel, LayerWeights, Network
from ennopt.tighten import lp_tighten_all

rng = np.random.default_rng(11)
networks = []
for _ in range(2):
    W1 = rng.normal(scale=1.0, size=(3, 2))
    layers = [LayerWeights(W1, rng.normal(scale=0.3, size=3)),
              LayerWeights(rng.normal(scale=1.0, size=(1, 3)), np.zeros(1))]
    networks.append(Network(layers))
model = EnsembleModel(networks, 2, np.zeros(2), np.ones(2))

bounds = lp_tighten_all(model)
milp = build_bigm(model, bounds)
nz = len(milp.binary_cols)
print("tiny ensemble: %d binaries after LP tightening" % nz)

z_bar = np.ones(nz)
dp = extract_dual_point(milp, z_bar)
cut = build_cut(dp, milp)
cols, vals, rhs = cut
print("\ngenerator z = all ones, inner LP optimum %.6f" % dp.objective)
print("cut has %d nonzeros, rhs %.6f" % (len(cols), rhs))

kernel = LpKernel(milp.lp)
print("\nassignment  inner LP optimum  cut rhs(z)   slack")
for bits in product((0.0, 1.0), repeat=nz):
    lo, hi = milp.lp.lo.copy(), milp.lp.hi.copy()
    rhs_z = rhs
    for col, v in zip(milp.binary_cols, bits):
        lo[col] = hi[col] = v
        k = cols.index(col) if col in cols else None
        if k is not None:
            rhs_z -= vals[k] * v
    sol = kernel.solve(lo=lo, hi=hi)
    if sol.status != OPTIMAL:
        print("%s  infeasible" % (bits,))
        continue
    print("%s  %16.6f  %10.6f  %6.1e"
          % (bits, sol.objective, rhs_z, rhs_z - sol.objective))

inc, stats = solve_milp(build_bigm(model, bounds))
assert check_cut_validity(cut, inc.x_full)
print("\nexact optimum %.6f; incumbent satisfies the cut" % inc.objective)
