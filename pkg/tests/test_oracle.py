from itertools import product

import numpy as np
import pytest

from ennopt.bnb import solve_milp
from ennopt.formulation import build_bigm
from ennopt.model import EnsembleModel, LayerWeights, Network, forward_ensemble
from ennopt.oracle import enumerate_patterns_exact, grid_search, verify_solution
from ennopt.tighten import lp_tighten_all

from conftest import random_ensemble


def test_affine_ensemble_hits_a_box_vertex(rng):
    nets = [Network([LayerWeights(rng.normal(size=(1, 3)), rng.normal(size=1))])
            for _ in range(3)]
    model = EnsembleModel(nets, 3, np.zeros(3), np.ones(3))
    x_star, value = enumerate_patterns_exact(model)
    best = max(forward_ensemble(model, np.array(v, dtype=float))
               for v in product([0, 1], repeat=3))
    assert value == pytest.approx(best, abs=1e-9)
    assert np.all((np.abs(x_star) < 1e-7) | (np.abs(x_star - 1) < 1e-7))


def test_single_hidden_neuron_by_hand():
    # f(x) = relu(x - 0.5) on [0, 1]: max 0.5 at x = 1, min 0 on [0, 0.5]
    net = Network([LayerWeights(np.array([[1.0]]), np.array([-0.5])),
                   LayerWeights(np.array([[1.0]]), np.array([0.0]))])
    model = EnsembleModel([net], 1, np.zeros(1), np.ones(1))
    x_star, value = enumerate_patterns_exact(model)
    assert value == pytest.approx(0.5, abs=1e-9)
    assert x_star[0] == pytest.approx(1.0, abs=1e-7)

    model_min = EnsembleModel([net], 1, np.zeros(1), np.ones(1), sense="min")
    _, vmin = enumerate_patterns_exact(model_min)
    assert vmin == pytest.approx(0.0, abs=1e-9)


def test_agrees_with_bigm_solver(rng):
    for _ in range(8):
        model = random_ensemble(rng, e=int(rng.integers(1, 3)), n_inputs=2,
                                width=3, n_hidden_layers=int(rng.integers(1, 3)))
        _, want = enumerate_patterns_exact(model)
        milp = build_bigm(model, lp_tighten_all(model))
        inc, stats = solve_milp(milp)
        assert stats.status == "optimal"
        assert inc.objective == pytest.approx(want, abs=1e-5)


def test_random_sampling_never_beats_oracle(rng):
    model = random_ensemble(rng, e=2, n_inputs=2, width=4, n_hidden_layers=2)
    _, value = enumerate_patterns_exact(model)
    from ennopt.model import forward_ensemble_batch
    pts = rng.uniform(0, 1, size=(100_000, 2))
    assert np.max(forward_ensemble_batch(model, pts)) <= value + 1e-9


def test_free_neuron_cap_refusal():
    # rows mixing signs with zero bias straddle zero on [0,1]^2: all 21 free
    W1 = np.tile([1.0, -1.0], (21, 1))
    net = Network([LayerWeights(W1, np.zeros(21)),
                   LayerWeights(np.ones((1, 21)), np.zeros(1))])
    model = EnsembleModel([net], 2, np.zeros(2), np.ones(2))
    with pytest.raises(ValueError, match="at most 20 free neurons"):
        enumerate_patterns_exact(model)


def test_grid_search_conventions(rng):
    model = random_ensemble(rng, e=1, n_inputs=2, width=3, n_hidden_layers=1)
    x1, v1 = grid_search(model, points_per_dim=1)
    assert np.allclose(x1, [0.5, 0.5])
    assert v1 == pytest.approx(forward_ensemble(model, np.array([0.5, 0.5])))

    _, oracle_value = enumerate_patterns_exact(model)
    prev = -np.inf
    for k in (3, 5, 9):  # each grid contains the previous one
        _, v = grid_search(model, points_per_dim=k)
        assert v <= oracle_value + 1e-9
        assert v >= prev - 1e-12
        prev = v


def test_min_sense_is_negated_max(rng):
    model = random_ensemble(rng, e=2, n_inputs=2, width=3, n_hidden_layers=1,
                            sense="min")
    _, vmin = enumerate_patterns_exact(model)
    from ennopt.model import as_maximization
    flipped, sign = as_maximization(model)
    _, vmax = enumerate_patterns_exact(flipped)
    assert sign == -1.0
    assert vmin == pytest.approx(-vmax, abs=1e-9)


def test_verify_solution_verdicts(rng):
    model = random_ensemble(rng, e=1, n_inputs=2, width=3, n_hidden_layers=1)
    x_star, value = enumerate_patterns_exact(model)
    good = verify_solution(model, {"x": x_star, "objective": value}, tol=1e-6)
    assert good.ok and not good.failures

    bad_obj = verify_solution(model, {"x": x_star, "objective": value + 0.1})
    assert not bad_obj.ok
    assert any(f.startswith("objective") for f in bad_obj.failures)

    out = verify_solution(model, {"x": model.box_hi + 1.0, "objective": value})
    assert not out.ok
    assert any(f.startswith("box") for f in out.failures)

    center = 0.5 * (model.box_lo + model.box_hi)
    sub = verify_solution(model, {"x": center,
                                  "objective": forward_ensemble(model, center)})
    if abs(forward_ensemble(model, center) - value) > 1e-6:
        assert not sub.ok
        assert any(f.startswith("oracle") for f in sub.failures)
