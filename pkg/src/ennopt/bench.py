"""Benchmark functions, dataset generation, and a small bagged-MLP trainer.

The four closed-form benchmarks are minimization problems with known global
optima, which makes them the end-to-end yardstick: sample a dataset, fit an
ensemble, optimize the surrogate, and score the argmin under the true
function. Training is a self-contained numpy Adam loop so runs are exactly
reproducible from a seed.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .model import EnsembleModel, LayerWeights, Network, Scaler

log = logging.getLogger(__name__)


# -- benchmark functions ----------------------------------------------------

def _peaks(X):
    x1, x2 = X[..., 0], X[..., 1]
    return (3 * (1 - x1) ** 2 * np.exp(-x1 ** 2 - (x2 + 1) ** 2)
            - 10 * (x1 / 5 - x1 ** 3 - x2 ** 5) * np.exp(-x1 ** 2 - x2 ** 2)
            - np.exp(-(x1 + 1) ** 2 - x2 ** 2) / 3)


def _beale(X):
    x1, x2 = X[..., 0], X[..., 1]
    return ((1.5 - x1 + x1 * x2) ** 2
            + (2.25 - x1 + x1 * x2 ** 2) ** 2
            + (2.625 - x1 + x1 * x2 ** 3) ** 2)


def _perm3(X):
    total = 0.0
    j = np.arange(1, 4, dtype=float)
    for k in (1, 2, 3):
        inner = ((j ** k + 0.5) * ((X[..., :3] / j) ** k - 1)).sum(axis=-1)
        total = total + inner ** 2
    return total


def _spring5(X):
    r2 = ((X - 4.0) ** 2).sum(axis=-1)
    return 0.1 * r2 - np.cos(4.0 * np.sqrt(r2))


@dataclass
class BenchmarkFn:
    name: str
    lo: np.ndarray
    hi: np.ndarray
    known_opt_value: float
    known_opt_point: np.ndarray
    fn: callable

    @property
    def dim(self):
        return self.lo.shape[0]


def _bench(name, lo, hi, value, point, fn):
    return BenchmarkFn(name, np.array(lo, dtype=float), np.array(hi, dtype=float),
                       value, np.array(point, dtype=float), fn)


BENCHMARKS = {
    "peaks": _bench("peaks", [-3, -3], [3, 3], -6.551, [0.228, -1.626], _peaks),
    "beale": _bench("beale", [-4.5, -4.5], [4.5, 4.5], 0.0, [3.0, 0.5], _beale),
    "perm3": _bench("perm3", [-3] * 3, [4] * 3, 0.0, [1.0, 2.0, 3.0], _perm3),
    "spring5": _bench("spring5", [0] * 5, [8] * 5, -1.0, [4.0] * 5, _spring5),
}


def get_benchmark(name):
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise ValueError("unknown benchmark %r; choose from %s"
                         % (name, sorted(BENCHMARKS))) from None


def eval_benchmark(f, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < f.lo - 1e-12) or np.any(x > f.hi + 1e-12):
        raise ValueError("point %s is outside the %s domain" % (x.tolist(), f.name))
    return float(f.fn(x))


# -- datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    provenance: str = "csv"


def sample_lhs(f, n_samples, seed):
    """Latin hypercube: one sample per equal-width stratum per coordinate."""
    rng = np.random.default_rng(seed)
    n, d = n_samples, f.dim
    u = (np.arange(n)[:, None] + rng.uniform(size=(n, d))) / n
    for j in range(d):
        u[:, j] = u[rng.permutation(n), j]
    X = f.lo + u * (f.hi - f.lo)
    return Dataset(X, f.fn(X), provenance="lhs")


def sample_mvn(f, n_samples, seed):
    """Normal draws centered on the known optimum, redrawn until inside the box.

    The covariance is Q^T diag(d) Q with Q a random orthogonal matrix and
    eigenvalues uniform in [0.5, 2] times (domain width / 6)^2, so about one
    sixth of the domain is a standard deviation.
    """
    rng = np.random.default_rng(seed)
    d = f.dim
    A = rng.normal(size=(d, d))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))  # fix the QR sign ambiguity for determinism
    width = float(np.mean(f.hi - f.lo))
    eig = rng.uniform(0.5, 2.0, size=d) * (width / 6.0) ** 2
    cov = Q.T @ np.diag(eig) @ Q
    chol = np.linalg.cholesky(cov)

    rows = []
    while len(rows) < n_samples:
        draw = f.known_opt_point + rng.normal(size=(n_samples, d)) @ chol.T
        ok = np.all((draw >= f.lo) & (draw <= f.hi), axis=1)
        rows.extend(draw[ok])
    X = np.array(rows[:n_samples])
    return Dataset(X, f.fn(X), provenance="mvn")


def write_dataset_csv(data, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x%d" % (j + 1) for j in range(data.X.shape[1])] + ["y"])
        for row, val in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(val))])


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in line] for line in r if line]
    arr = np.array(rows)
    if arr.ndim != 2 or arr.shape[1] != len(header) or arr.shape[1] < 2:
        raise ValueError("malformed dataset CSV %s" % path)
    return Dataset(arr[:, :-1], arr[:, -1], provenance="csv")


# -- training ---------------------------------------------------------------

@dataclass
class TrainConfig:
    e: int = 1
    layers: list = field(default_factory=lambda: [20])
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 30
    seed: int = 0


def _fit_scalers(X, y):
    x_min, x_max = X.min(axis=0), X.max(axis=0)
    flat = np.flatnonzero(x_max - x_min <= 0)
    if flat.size:
        raise ValueError("cannot scale: feature x%d is constant" % (flat[0] + 1))
    y_min, y_max = float(y.min()), float(y.max())
    if y_max - y_min <= 0:
        raise ValueError("cannot scale: target is constant")
    return Scaler(x_min, x_max, y_min, y_max)


def _init_layers(rng, dims):
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        layers.append([W, np.zeros(fan_out)])
    return layers


def _forward_batch(layers, X):
    acts = [X]
    for k, (W, b) in enumerate(layers):
        Z = acts[-1] @ W.T + b
        acts.append(np.maximum(Z, 0.0) if k < len(layers) - 1 else Z)
    return acts


def _mse(layers, X, y):
    pred = _forward_batch(layers, X)[-1][:, 0]
    return float(np.mean((pred - y) ** 2))


def _train_one(Xs, ys, widths, cfg, rng):
    n = Xs.shape[0]
    boot = rng.integers(0, n, size=n)
    Xb, yb = Xs[boot], ys[boot]
    n_val = max(1, int(round(0.2 * n)))
    Xv, yv = Xb[:n_val], yb[:n_val]
    Xt, yt = Xb[n_val:], yb[n_val:]

    dims = [Xs.shape[1]] + list(widths) + [1]
    layers = _init_layers(rng, dims)
    mom = [[np.zeros_like(W), np.zeros_like(b)] for W, b in layers]
    vel = [[np.zeros_like(W), np.zeros_like(b)] for W, b in layers]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    best_val = np.inf
    best_layers = [[W.copy(), b.copy()] for W, b in layers]
    stall = 0

    for _ in range(cfg.max_epochs):
        order = rng.permutation(Xt.shape[0])
        for s in range(0, Xt.shape[0], cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            Xm, ym = Xt[idx], yt[idx]
            acts = _forward_batch(layers, Xm)
            m = Xm.shape[0]
            delta = 2.0 * (acts[-1][:, 0] - ym)[:, None] / m
            grads = []
            for k in range(len(layers) - 1, -1, -1):
                gW = delta.T @ acts[k]
                gb = delta.sum(axis=0)
                grads.append((gW, gb))
                if k > 0:
                    delta = (delta @ layers[k][0]) * (acts[k] > 0)
            grads.reverse()
            step += 1
            for k, (gW, gb) in enumerate(grads):
                for slot, g in ((0, gW), (1, gb)):
                    mom[k][slot] = b1 * mom[k][slot] + (1 - b1) * g
                    vel[k][slot] = b2 * vel[k][slot] + (1 - b2) * g * g
                    mh = mom[k][slot] / (1 - b1 ** step)
                    vh = vel[k][slot] / (1 - b2 ** step)
                    layers[k][slot] -= cfg.learning_rate * mh / (np.sqrt(vh) + eps)
        val = _mse(layers, Xv, yv)
        if val < best_val - 1e-9:
            best_val = val
            best_layers = [[W.copy(), b.copy()] for W, b in layers]
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    return Network([LayerWeights(W, b) for W, b in best_layers])


def train_ensemble(data, cfg, sense="max"):
    """Bagged MLP ensemble on min-max scaled data; box is the unit cube.

    Each network draws its own bootstrap resample and holds out 20% of it for
    early stopping. Per-network randomness streams from [seed, index], so the
    result is a pure function of the dataset and config.
    """
    scaler = _fit_scalers(data.X, data.y)
    Xs = (data.X - scaler.input_min) / (scaler.input_max - scaler.input_min)
    ys = (data.y - scaler.output_min) / (scaler.output_max - scaler.output_min)
    networks = []
    for i in range(cfg.e):
        rng = np.random.default_rng([cfg.seed, i])
        networks.append(_train_one(Xs, ys, cfg.layers, cfg, rng))
    n = data.X.shape[1]
    return EnsembleModel(networks, n, np.zeros(n), np.ones(n),
                         scaler=scaler, sense=sense)


# -- solution-quality metric ------------------------------------------------

def mahalanobis(x, data):
    """Distance of x from the dataset in sample-covariance units."""
    X = data.X
    if X.shape[0] < X.shape[1] + 1:
        raise ValueError("need at least dim+1 rows for a sample covariance")
    mu = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    diff = np.asarray(x, dtype=float) - mu
    try:
        sol = np.linalg.solve(cov, diff)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        log.warning("singular sample covariance; applying 1e-8 ridge")
        sol = np.linalg.solve(cov + 1e-8 * np.eye(cov.shape[0]), diff)
    return float(np.sqrt(max(0.0, diff @ sol)))
