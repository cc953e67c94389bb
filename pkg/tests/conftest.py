import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from ennopt.model import EnsembleModel, LayerWeights, Network


def random_lp(rng, n_max=6, m_max=6, feasible=True):
    """Random bounded LP; when feasible=True the rhs is built around an
    interior point so every instance has an optimum."""
    from ennopt.lp import LpProblem

    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    lo = rng.uniform(-2.0, 0.0, n)
    hi = lo + rng.uniform(0.5, 3.0, n)
    c = rng.normal(size=n)
    prob = LpProblem(n_cols=n, lo=lo, hi=hi, c=c, sense=rng.choice(["max", "min"]))
    x0 = rng.uniform(lo, hi)
    n_eq = 0
    for _ in range(m):
        k = int(rng.integers(1, n + 1))
        cols = rng.choice(n, size=k, replace=False)
        vals = rng.normal(size=k)
        act = float(vals @ x0[cols])
        rel = rng.choice(["<=", ">=", "="] if n_eq < n - 1 else ["<=", ">="])
        if not feasible:
            rel = rng.choice(["<=", ">="])
            prob.add_row(cols, vals, rel, act - 1.0 if rel == "<=" else act + 1.0)
            continue
        if rel == "<=":
            prob.add_row(cols, vals, rel, act + abs(rng.normal()))
        elif rel == ">=":
            prob.add_row(cols, vals, rel, act - abs(rng.normal()))
        else:
            prob.add_row(cols, vals, rel, act)
            n_eq += 1
    return prob


def random_ensemble(rng, e=2, n_inputs=2, width=3, n_hidden_layers=1, sense="max",
                    weight_scale=1.5):
    """Small random ensemble over the [0, 1]^n box."""
    networks = []
    for _ in range(e):
        dims = [n_inputs] + [width] * n_hidden_layers + [1]
        layers = []
        for k in range(len(dims) - 1):
            W = rng.normal(scale=weight_scale / np.sqrt(dims[k]), size=(dims[k + 1], dims[k]))
            b = rng.normal(scale=0.3, size=dims[k + 1])
            layers.append(LayerWeights(W, b))
        networks.append(Network(layers))
    return EnsembleModel(
        networks=networks,
        input_dim=n_inputs,
        box_lo=np.zeros(n_inputs),
        box_hi=np.ones(n_inputs),
        sense=sense,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
