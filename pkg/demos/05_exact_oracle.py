"""Exact oracles and solution auditing on a hand-sized ensemble.

Pattern enumeration solves tiny ReLU ensembles exactly by walking every
activation assignment, which makes it the ground truth the solvers are
measured against. This script runs the oracle next to a grid search and the
full driver, then shows verify_solution catching a doctored report.
"""

import numpy as np

from ennopt.driver import RunConfig, optimize_two_phase
from ennopt.model import EnsembleModel, LayerWeights, Network, forward_ensemble
from ennopt.oracle import enumerate_patterns_exact, grid_search, verify_solution

rng = np.random.default_rng(7)
networks = []
for _ in range(2):
    dims = [2, 4, 1]
    layers = [LayerWeights(rng.normal(scale=1.5, size=(k, m)),
                           rng.normal(scale=0.5, size=k))
              for m, k in zip(dims[:-1], dims[1:])]
    networks.append(Network(layers))
model = EnsembleModel(networks, 2, np.zeros(2), np.ones(2))

x_star, v_star = enumerate_patterns_exact(model)
x_grid, v_grid = grid_search(model, points_per_dim=41)
print("oracle  : %.6f at %s" % (v_star, np.round(x_star, 4).tolist()))
print("grid 41x41: %.6f at %s (a lower bound on the true max)"
      % (v_grid, np.round(x_grid, 4).tolist()))

report = optimize_two_phase(model, RunConfig(mode="two_phase",
                                             phase1_limit=30.0,
                                             total_limit=60.0))
print("solver  : %.6f, solved=%s" % (report.objective_scaled, report.solved))

verdict = verify_solution(
    model, {"x": report.x_scaled, "objective": report.objective_scaled})
print("\naudit of the solver report: ok=%s, oracle gap %.2e"
      % (verdict.ok, abs(verdict.oracle_value - report.objective_scaled)))

bogus = {"x": report.x_scaled, "objective": report.objective_scaled + 0.5}
verdict = verify_solution(model, bogus)
print("audit of a doctored objective: ok=%s" % verdict.ok)
for f in verdict.failures:
    print("  flagged -> %s" % f)

outside = {"x": model.box_hi + 1.0, "objective": v_star}
verdict = verify_solution(model, outside)
print("audit of an out-of-box point: ok=%s" % verdict.ok)
for f in verdict.failures:
    print("  flagged -> %s" % f)

x_mid = 0.5 * (model.box_lo + model.box_hi)
print("\nforward check at the box center: %.6f" % forward_ensemble(model, x_mid))
