"""Quickstart: surrogate optimization of the peaks function, end to end.

Draws a Latin hypercube sample of the 2-d peaks benchmark, fits a bagged
three-network ensemble, minimizes the surrogate exactly, and scores the
returned point under the true function. Everything is deterministic from the
seeds below.
"""

import os

import numpy as np

from ennopt.bench import (TrainConfig, eval_benchmark, get_benchmark,
                          mahalanobis, sample_lhs, train_ensemble)
from ennopt.driver import RunConfig, optimize_two_phase, write_report_json

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

f = get_benchmark("peaks")
print("benchmark: %s on [%g, %g]^2, global minimum %.3f at %s"
      % (f.name, f.lo[0], f.hi[0], f.known_opt_value,
         f.known_opt_point.tolist()))

data = sample_lhs(f, 2000, seed=0)
print("sampled %d Latin hypercube rows, y range [%.3f, %.3f]"
      % (data.X.shape[0], data.y.min(), data.y.max()))

model = train_ensemble(data, TrainConfig(e=3, layers=[20], seed=0), sense="min")
print("trained %d networks with one hidden layer of 20" % model.n_networks)

report = optimize_two_phase(model, RunConfig(
    mode="two_phase", phase1_limit=60.0, total_limit=120.0))
write_report_json(report, os.path.join(OUT, "quickstart_report.json"))

x = np.array(report.x_unscaled)
true_value = eval_benchmark(f, np.clip(x, f.lo, f.hi))
print("solved=%s in %.1fs over %s nodes"
      % (report.solved, report.seconds["total"], report.nodes))
print("surrogate minimum %.4f at x = %s" % (report.objective_unscaled,
                                            np.round(x, 4).tolist()))
print("true peaks value there: %.4f (optimum %.3f)"
      % (true_value, f.known_opt_value))
print("Mahalanobis distance of x from the training data: %.2f"
      % mahalanobis(x, data))
print("full report written to %s" % os.path.join(OUT, "quickstart_report.json"))
