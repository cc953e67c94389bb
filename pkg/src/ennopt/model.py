"""Ensemble model types, forward evaluation, and JSON (de)serialization.

A model bundles e trained networks together with the box domain they are
optimized over and the min-max scaler used during training, so that solver
output can be reported in the original data units.
"""

import json
from dataclasses import dataclass, field

import numpy as np

BOX_TOL = 1e-9


class ModelError(ValueError):
    """Raised for malformed models or out-of-domain evaluation points."""


@dataclass
class LayerWeights:
    """One affine layer, h = W @ y_prev + b.

    W has shape (n_out, n_in); row j holds the incoming weights of neuron j.
    """

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    @property
    def n_out(self):
        return self.W.shape[0]

    @property
    def n_in(self):
        return self.W.shape[1]


@dataclass
class Network:
    """A feedforward net: ReLU after every layer except the last (affine)."""

    layers: list  # list[LayerWeights]

    @property
    def n_hidden_layers(self):
        return len(self.layers) - 1

    @property
    def input_dim(self):
        return self.layers[0].n_in


@dataclass
class Scaler:
    """Min-max scaler mapping original units to the [0, 1] training range."""

    input_min: np.ndarray
    input_max: np.ndarray
    output_min: float
    output_max: float

    def __post_init__(self):
        self.input_min = np.asarray(self.input_min, dtype=float)
        self.input_max = np.asarray(self.input_max, dtype=float)

    @classmethod
    def identity(cls, n):
        return cls(np.zeros(n), np.ones(n), 0.0, 1.0)


@dataclass
class EnsembleModel:
    """e networks over a shared box domain, optimized in scaled units."""

    networks: list  # list[Network]
    input_dim: int
    box_lo: np.ndarray
    box_hi: np.ndarray
    scaler: Scaler = None
    sense: str = "max"  # "max" or "min", applied to the mean output

    def __post_init__(self):
        self.box_lo = np.asarray(self.box_lo, dtype=float)
        self.box_hi = np.asarray(self.box_hi, dtype=float)
        if self.scaler is None:
            self.scaler = Scaler.identity(self.input_dim)
        validate_model(self)

    @property
    def n_networks(self):
        return len(self.networks)


def validate_model(model):
    """Check shape consistency; error messages name the offending part."""
    if not model.networks:
        raise ModelError("model has no networks")
    if model.sense not in ("max", "min"):
        raise ModelError("sense must be 'max' or 'min', got %r" % (model.sense,))
    if model.box_lo.shape != (model.input_dim,) or model.box_hi.shape != (model.input_dim,):
        raise ModelError("box vectors must have length input_dim=%d" % model.input_dim)
    if np.any(model.box_lo > model.box_hi):
        j = int(np.argmax(model.box_lo > model.box_hi))
        raise ModelError("box is empty in coordinate %d (lo > hi)" % j)
    if model.scaler.input_min.shape != (model.input_dim,) or model.scaler.input_max.shape != (
        model.input_dim,
    ):
        raise ModelError("scaler input vectors must have length input_dim=%d" % model.input_dim)
    for i, net in enumerate(model.networks):
        if not net.layers:
            raise ModelError("network %d has no layers" % i)
        prev = model.input_dim
        for l, layer in enumerate(net.layers):
            if layer.W.ndim != 2:
                raise ModelError("network %d layer %d: W must be a matrix" % (i, l))
            if layer.W.shape[1] != prev:
                raise ModelError(
                    "network %d layer %d: W has %d inputs, expected %d"
                    % (i, l, layer.W.shape[1], prev)
                )
            if layer.b.shape != (layer.W.shape[0],):
                raise ModelError(
                    "network %d layer %d: b has length %d, expected %d"
                    % (i, l, layer.b.shape[0], layer.W.shape[0])
                )
            prev = layer.W.shape[0]
        if prev != 1:
            raise ModelError("network %d: output layer must have exactly 1 neuron" % i)


def _check_in_box(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.input_dim,):
        raise ModelError("x must have length input_dim=%d" % model.input_dim)
    if np.any(x < model.box_lo - BOX_TOL) or np.any(x > model.box_hi + BOX_TOL):
        j = int(np.argmax((x < model.box_lo - BOX_TOL) | (x > model.box_hi + BOX_TOL)))
        raise ModelError("x[%d]=%.17g is outside the box" % (j, x[j]))
    return x


def forward_trace(net, x):
    """Evaluate one network, returning per-layer pre- and post-activations.

    Returns (h_list, y_list) where h_list[l] = W y_{l-1} + b and
    y_list[l] = relu(h_list[l]) for hidden layers, y = h for the output layer.
    """
    h_list, y_list = [], []
    y = np.asarray(x, dtype=float)
    n_layers = len(net.layers)
    for l, layer in enumerate(net.layers):
        h = layer.W @ y + layer.b
        y = h if l == n_layers - 1 else np.maximum(h, 0.0)
        h_list.append(h)
        y_list.append(y)
    return h_list, y_list


def forward_network(net, x):
    """Scalar output of one network at x (scaled units, no box check)."""
    _, y_list = forward_trace(net, x)
    return float(y_list[-1][0])


def forward_ensemble(model, x):
    """Mean network output at x; x must lie in the box within 1e-9."""
    x = _check_in_box(model, x)
    total = 0.0
    for net in model.networks:
        total += forward_network(net, x)
    return total / model.n_networks


def forward_ensemble_batch(model, X):
    """Mean output at each row of X, ignoring the box check (batch helper)."""
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape[0])
    for net in model.networks:
        Y = X
        n_layers = len(net.layers)
        for l, layer in enumerate(net.layers):
            H = Y @ layer.W.T + layer.b
            Y = H if l == n_layers - 1 else np.maximum(H, 0.0)
        out += Y[:, 0]
    return out / model.n_networks


def scale_input(model, x_orig):
    """Map a point from original data units to the scaled [0, 1] domain."""
    s = model.scaler
    span = s.input_max - s.input_min
    span = np.where(span == 0.0, 1.0, span)
    return (np.asarray(x_orig, dtype=float) - s.input_min) / span


def unscale_input(model, x_scaled):
    """Map a scaled-domain point back to original data units."""
    s = model.scaler
    return np.asarray(x_scaled, dtype=float) * (s.input_max - s.input_min) + s.input_min


def unscale_objective(model, v):
    """Map a scaled mean-output value back to original data units."""
    s = model.scaler
    return float(v) * (s.output_max - s.output_min) + s.output_min


def as_maximization(model):
    """Return an equivalent maximization model and the reporting sign.

    For sense "min" the output layer of every network is negated, so a single
    maximizing solver path handles both senses; reported objectives must be
    multiplied by the returned sign (+1 for "max", -1 for "min").
    """
    if model.sense == "max":
        return model, 1.0
    networks = []
    for net in model.networks:
        layers = [LayerWeights(l.W.copy(), l.b.copy()) for l in net.layers]
        layers[-1] = LayerWeights(-layers[-1].W, -layers[-1].b)
        networks.append(Network(layers))
    flipped = EnsembleModel(
        networks=networks,
        input_dim=model.input_dim,
        box_lo=model.box_lo.copy(),
        box_hi=model.box_hi.copy(),
        scaler=model.scaler,
        sense="max",
    )
    return flipped, -1.0


def model_to_dict(model):
    return {
        "input_dim": model.input_dim,
        "sense": model.sense,
        "box": {"lo": model.box_lo.tolist(), "hi": model.box_hi.tolist()},
        "scaler": {
            "input_min": model.scaler.input_min.tolist(),
            "input_max": model.scaler.input_max.tolist(),
            "output_min": model.scaler.output_min,
            "output_max": model.scaler.output_max,
        },
        "networks": [
            {"layers": [{"W": l.W.tolist(), "b": l.b.tolist()} for l in net.layers]}
            for net in model.networks
        ],
    }


def model_from_dict(d):
    try:
        networks = [
            Network([LayerWeights(np.array(l["W"], dtype=float), np.array(l["b"], dtype=float))
                     for l in nd["layers"]])
            for nd in d["networks"]
        ]
        return EnsembleModel(
            networks=networks,
            input_dim=int(d["input_dim"]),
            box_lo=np.array(d["box"]["lo"], dtype=float),
            box_hi=np.array(d["box"]["hi"], dtype=float),
            scaler=Scaler(
                np.array(d["scaler"]["input_min"], dtype=float),
                np.array(d["scaler"]["input_max"], dtype=float),
                float(d["scaler"]["output_min"]),
                float(d["scaler"]["output_max"]),
            ),
            sense=d["sense"],
        )
    except KeyError as exc:
        raise ModelError("model file is missing field %s" % exc) from exc


def save_model(model, path):
    """Write the model as JSON. Floats keep full round-trip precision."""
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a model written by :func:`save_model`."""
    with open(path) as fh:
        return model_from_dict(json.load(fh))
