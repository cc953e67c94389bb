"""Inside the two-phase solve: multiplier warm-up, spatial search, handoff.

Builds an ensemble hard enough that the monolithic model does not close at
the root, then runs the pieces by hand: the fixed-z multiplier warm-up, a few
Lagrangian bounds, and finally the full driver in both modes for a gap
comparison on the same instance.
"""

import numpy as np

from ennopt.driver import RunConfig, optimize_baseline, optimize_two_phase
from ennopt.model import EnsembleModel, LayerWeights, Network, forward_ensemble
from ennopt.phase2 import (LagrangianMultipliers, Phase2Params, derive_z_map,
                           solve_lag_relaxation, subgradient_init)
from ennopt.tighten import TightenParams, lp_tighten_all

rng = np.random.default_rng(23)
networks = []
for _ in range(3):
    dims = [3, 30, 1]
    layers = [LayerWeights(rng.normal(scale=3.0 / np.sqrt(m), size=(k, m)),
                           rng.normal(scale=0.3, size=k))
              for m, k in zip(dims[:-1], dims[1:])]
    networks.append(Network(layers))
model = EnsembleModel(networks, 3, np.zeros(3), np.ones(3))

bounds = lp_tighten_all(model)
center = 0.5 * (model.box_lo + model.box_hi)
z_bar = derive_z_map(model, bounds, center)
print("free ReLUs per the LP bounds: %d, ensemble value at the box center "
      "%.4f" % (bounds.n_free(), forward_ensemble(model, center)))

params = Phase2Params(init_iterations=8)
lam0 = LagrangianMultipliers.zeros(model.n_networks, model.input_dim)
b0, _ = solve_lag_relaxation(model, bounds, lam0)
print("\nLagrangian bound with zero multipliers: %.4f" % b0)

lam, _ = subgradient_init(model, bounds, z_bar, params)
b1, copies = solve_lag_relaxation(model, bounds, lam)
spread = np.max(copies, axis=0) - np.min(copies, axis=0)
print("after %d warm-up rounds: bound %.4f, copy spread per input %s"
      % (params.init_iterations, b1, np.round(spread, 3).tolist()))

cfg_b = RunConfig(mode="baseline", phase1_limit=25.0, total_limit=25.0)
cfg_t = RunConfig(mode="two_phase", phase1_limit=5.0, total_limit=25.0,
                  tighten=TightenParams(survey_nodes=200, milp_time_limit=1.0),
                  phase2=params)
rb = optimize_baseline(model, cfg_b)
rt = optimize_two_phase(model, cfg_t)

print("\nmode       solved  objective   bound     gap%   nodes")
for name, r in (("baseline", rb), ("two_phase", rt)):
    print("%-9s  %-6s  %9.4f  %8.4f  %6.3f  %s"
          % (name, r.solved, r.objective_scaled, r.bound_scaled,
             100.0 * r.gap, r.nodes))
