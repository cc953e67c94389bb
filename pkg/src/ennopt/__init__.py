"""Global optimization over the mean response of an ensemble of ReLU networks.

The package solves

    max (or min)  (1/e) * sum_i  N_i(x)    subject to  x in a box,

where each N_i is a trained fully connected network with ReLU hidden layers
and a single affine output. The main entry points are:

* :func:`ennopt.driver.optimize_two_phase` and
  :func:`ennopt.driver.optimize_baseline` for full solves,
* :mod:`ennopt.oracle` for exact brute-force cross-checks on small models,
* :mod:`ennopt.bench` for benchmark functions, sampling, and training,
* the ``ennopt`` command line front end.
"""

from .driver import RunConfig, optimize_baseline, optimize_two_phase
from .model import (
    EnsembleModel,
    LayerWeights,
    Network,
    forward_ensemble,
    forward_network,
    load_model,
    save_model,
)

__all__ = [
    "EnsembleModel",
    "LayerWeights",
    "Network",
    "RunConfig",
    "forward_ensemble",
    "forward_network",
    "load_model",
    "optimize_baseline",
    "optimize_two_phase",
    "save_model",
]

__version__ = "0.1.0"
