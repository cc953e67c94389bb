"""Big-M MILP encoding of an ensemble of ReLU networks over a box.

Layer numbering follows the network statement: layer 1 is the input, layers
2..L-1 are the ReLU hidden layers, layer L is the affine output. A neuron is
addressed by the key (i, l, j) with network index i, layer l, neuron j, all
but l zero-based.

Per free hidden neuron (lower bound lb < 0 < ub upper bound) the encoding is

    const3:   h - sum_k w_k y_prev_k            = b
    const4a:  h - y                            <= 0
    const4b:  y - h + |lb| z                   <= |lb|      (y <= h - lb (1 - z))
    const5b:  y - ub z                         <= 0          (0 <= y as a bound)

with z binary. Neurons whose bounds pin the activation need no binary:
always-active ones (lb >= 0) keep y = h, always-inactive ones (ub <= 0) fix
y = 0 and their output is folded out of downstream rows.
"""

from dataclasses import dataclass, field

import numpy as np

from .lp import LpProblem


@dataclass
class FreeNeuronRef:
    """Column/row bookkeeping for one binary neuron, used by cut generation."""

    key: tuple
    h_col: int
    y_col: int
    z_col: int
    const3_row: int
    const4a_row: int
    const4b_row: int
    const5b_row: int
    lb: float
    ub: float


@dataclass
class MilpModel:
    """An LpProblem plus the integrality and indexing metadata around it."""

    lp: LpProblem
    binary_cols: list
    var_index: dict  # ("x", j) / ("y"|"h"|"z", i, l, j) -> column
    row_index: dict  # ("const1"|"const2"|"const3"|..., i, l, j) -> row
    free_neurons: list
    output_y_cols: list
    networks_included: list
    n_networks_total: int

    def col(self, *key):
        return self.var_index[key]

    def z_value_map(self, x_full):
        """Binary values of a full solution vector, keyed by neuron."""
        return {fn.key: float(x_full[fn.z_col]) for fn in self.free_neurons}


def _status(lb, ub):
    if ub <= 0.0:
        return "always_inactive"
    if lb >= 0.0:
        return "always_active"
    return "free"


def _build(model, bounds, networks, box_lo, box_hi, last_layer, target,
           extra_x_objective):
    """Shared constructor behind the three public builders.

    last_layer[i] gives the final layer encoded for network i: the output
    layer for full builds, the target's own layer for bound subproblems (in
    which case only the target neuron of that layer is encoded, h-row only).
    """
    n = model.input_dim
    box_lo = model.box_lo if box_lo is None else np.asarray(box_lo, dtype=float)
    box_hi = model.box_hi if box_hi is None else np.asarray(box_hi, dtype=float)

    cols_lo, cols_hi, names = [], [], []
    var_index = {}

    def add_col(key, lo, hi):
        var_index[key] = len(cols_lo)
        cols_lo.append(lo)
        cols_hi.append(hi)
        return var_index[key]

    for j in range(n):
        add_col(("x", j), box_lo[j], box_hi[j])

    for i in networks:
        net = model.networks[i]
        L = len(net.layers) + 1
        for j in range(n):
            add_col(("y", i, 1, j), box_lo[j], box_hi[j])
        for l in range(2, last_layer[i] + 1):
            layer = net.layers[l - 2]
            for j in range(layer.n_out):
                if target is not None and l == last_layer[i]:
                    if (i, l, j) == target:
                        add_col(("h", i, l, j), -np.inf, np.inf)
                    continue
                if l == L:
                    add_col(("h", i, l, j), -np.inf, np.inf)
                    add_col(("y", i, l, j), -np.inf, np.inf)
                    continue
                lb, ub = bounds.lb((i, l, j)), bounds.ub((i, l, j))
                st = _status(lb, ub)
                if st == "always_inactive":
                    add_col(("y", i, l, j), 0.0, 0.0)
                elif st == "always_active":
                    add_col(("h", i, l, j), -np.inf, np.inf)
                    add_col(("y", i, l, j), max(lb, 0.0), ub)
                else:
                    add_col(("h", i, l, j), -np.inf, np.inf)
                    add_col(("y", i, l, j), 0.0, ub)
                    add_col(("z", i, l, j), 0.0, 1.0)

    n_cols = len(cols_lo)
    c = np.zeros(n_cols)
    e_total = model.n_networks
    output_y_cols = []
    if target is None:
        for i in networks:
            L = len(model.networks[i].layers) + 1
            col = var_index[("y", i, L, 0)]
            output_y_cols.append(col)
            c[col] += 1.0 / e_total
    else:
        c[var_index[("h",) + target]] = 1.0
    if extra_x_objective is not None:
        for j in range(n):
            c[var_index[("x", j)]] += float(extra_x_objective[j])

    prob = LpProblem(n_cols=n_cols, lo=np.array(cols_lo), hi=np.array(cols_hi), c=c, sense="max")
    row_index = {}
    free_neurons = []
    binary_cols = []

    def prev_y_cols(i, l, layer):
        """Feeding columns for layer l, with fixed-zero neurons folded out."""
        cols, idx = [], []
        for k in range(layer.n_in):
            if l - 1 == 1:
                cols.append(var_index[("y", i, 1, k)])
                idx.append(k)
                continue
            lbp, ubp = bounds.lb((i, l - 1, k)), bounds.ub((i, l - 1, k))
            if _status(lbp, ubp) == "always_inactive":
                continue  # output fixed at exactly 0, bias unchanged
            cols.append(var_index[("y", i, l - 1, k)])
            idx.append(k)
        return cols, idx

    for i in networks:
        net = model.networks[i]
        L = len(net.layers) + 1
        for j in range(n):
            r = prob.add_row(
                [var_index[("y", i, 1, j)], var_index[("x", j)]], [1.0, -1.0], "=", 0.0
            )
            row_index[("const1", i, 1, j)] = r
        for l in range(2, last_layer[i] + 1):
            layer = net.layers[l - 2]
            for j in range(layer.n_out):
                is_target = target is not None and (i, l, j) == target
                if target is not None and l == last_layer[i] and not is_target:
                    continue
                if l < L and not is_target:
                    lb, ub = bounds.lb((i, l, j)), bounds.ub((i, l, j))
                    st = _status(lb, ub)
                    if st == "always_inactive":
                        continue
                else:
                    st = None
                h_col = var_index[("h", i, l, j)]
                pcols, pidx = prev_y_cols(i, l, layer)
                w = layer.W[j]
                cols = [h_col] + pcols
                vals = [1.0] + [-w[k] for k in pidx]
                r3 = prob.add_row(cols, vals, "=", float(layer.b[j]))
                row_index[("const3", i, l, j)] = r3
                if is_target:
                    continue
                y_col = var_index[("y", i, l, j)]
                if l == L:
                    r2 = prob.add_row([y_col, h_col], [1.0, -1.0], "=", 0.0)
                    row_index[("const2", i, l, j)] = r2
                elif st == "always_active":
                    r = prob.add_row([y_col, h_col], [1.0, -1.0], "=", 0.0)
                    row_index[("active_eq", i, l, j)] = r
                else:
                    z_col = var_index[("z", i, l, j)]
                    binary_cols.append(z_col)
                    r4a = prob.add_row([h_col, y_col], [1.0, -1.0], "<=", 0.0)
                    r4b = prob.add_row([y_col, h_col, z_col], [1.0, -1.0, -lb], "<=", -lb)
                    r5b = prob.add_row([y_col, z_col], [1.0, -ub], "<=", 0.0)
                    row_index[("const4a", i, l, j)] = r4a
                    row_index[("const4b", i, l, j)] = r4b
                    row_index[("const5b", i, l, j)] = r5b
                    free_neurons.append(FreeNeuronRef(
                        key=(i, l, j), h_col=h_col, y_col=y_col, z_col=z_col,
                        const3_row=r3, const4a_row=r4a, const4b_row=r4b,
                        const5b_row=r5b, lb=lb, ub=ub,
                    ))

    return MilpModel(
        lp=prob,
        binary_cols=binary_cols,
        var_index=var_index,
        row_index=row_index,
        free_neurons=free_neurons,
        output_y_cols=output_y_cols,
        networks_included=list(networks),
        n_networks_total=e_total,
    )


def build_bigm(model, bounds, box_lo=None, box_hi=None):
    """Full ensemble encoding; objective is the mean of the output neurons."""
    networks = list(range(model.n_networks))
    last_layer = {i: len(model.networks[i].layers) + 1 for i in networks}
    return _build(model, bounds, networks, box_lo, box_hi, last_layer, None, None)


def build_single_network_bigm(model, net_index, bounds, box_lo=None, box_hi=None,
                              extra_x_objective=None):
    """One network's encoding with objective (1/e) y_out + extra_x_objective @ x.

    The 1/e scale uses the full ensemble size so the per-network pieces of a
    decomposition sum to the ensemble objective.
    """
    last_layer = {net_index: len(model.networks[net_index].layers) + 1}
    return _build(model, bounds, [net_index], box_lo, box_hi, last_layer, None,
                  extra_x_objective)


def build_bound_subproblem(model, neuron, direction, relaxed, bounds,
                           box_lo=None, box_hi=None):
    """Encoding of layers up to the given neuron with objective +-h.

    The returned problem always maximizes: direction "max" optimizes h itself,
    direction "min" optimizes -h, so callers negate the value. With
    relaxed=True the binary set is empty and the LP relaxation is solved as-is.
    """
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    i, l, j = neuron
    last_layer = {i: l}
    milp = _build(model, bounds, [i], box_lo, box_hi, last_layer, (i, l, j), None)
    if direction == "min":
        milp.lp.c = -milp.lp.c
    if relaxed:
        milp.binary_cols = []
    return milp


def embed_point(milp, model, x):
    """Full solution vector induced by a forward pass at x.

    Sets every h, y from the network evaluation and z = 1 where h > 0. The
    result satisfies all rows of a full build (and is how incumbents are
    synthesized from plain input points).
    """
    from .model import forward_trace

    v = np.zeros(milp.lp.n_cols)
    x = np.asarray(x, dtype=float)
    for j in range(model.input_dim):
        v[milp.var_index[("x", j)]] = x[j]
    for i in milp.networks_included:
        net = model.networks[i]
        h_list, y_list = forward_trace(net, x)
        for j in range(model.input_dim):
            v[milp.var_index[("y", i, 1, j)]] = x[j]
        for l in range(2, len(net.layers) + 2):
            h, y = h_list[l - 2], y_list[l - 2]
            for j in range(h.size):
                hk, yk, zk = ("h", i, l, j), ("y", i, l, j), ("z", i, l, j)
                if hk in milp.var_index:
                    v[milp.var_index[hk]] = h[j]
                if yk in milp.var_index:
                    v[milp.var_index[yk]] = y[j]
                if zk in milp.var_index:
                    v[milp.var_index[zk]] = 1.0 if h[j] > 0 else 0.0
    return v


def point_violations(milp, v, tol=1e-7):
    """Rows violated by a full vector v, as (row, amount) pairs."""
    out = []
    for r, row in enumerate(milp.lp.rows):
        act = row.activity(v)
        s = tol * (1.0 + abs(row.rhs))
        if row.rel == "<=" and act > row.rhs + s:
            out.append((r, act - row.rhs))
        elif row.rel == ">=" and act < row.rhs - s:
            out.append((r, row.rhs - act))
        elif row.rel == "=" and abs(act - row.rhs) > s:
            out.append((r, abs(act - row.rhs)))
    return out


def _col_names(milp):
    names = [None] * milp.lp.n_cols
    for key, col in milp.var_index.items():
        if key[0] == "x":
            names[col] = "x%d" % key[1]
        else:
            names[col] = "%s_%d_%d_%d" % key
    for c, nm in enumerate(names):
        if nm is None:
            names[c] = "v%d" % c
    return names


def write_lp_text(milp, stream):
    """Human-readable LP-format dump of the model, for inspection and diffing."""
    names = _col_names(milp)
    lp = milp.lp
    terms = [
        "%+.12g %s" % (lp.c[j], names[j]) for j in range(lp.n_cols) if lp.c[j] != 0.0
    ]
    stream.write("maximize\n  obj: %s\n" % " ".join(terms))
    stream.write("subject to\n")
    rel_txt = {"<=": "<=", "=": "=", ">=": ">="}
    for r, row in enumerate(lp.rows):
        body = " ".join(
            "%+.12g %s" % (val, names[col]) for col, val in zip(row.cols, row.vals)
        )
        stream.write("  r%d: %s %s %.12g\n" % (r, body, rel_txt[row.rel], row.rhs))
    stream.write("bounds\n")
    for j in range(lp.n_cols):
        stream.write("  %.12g <= %s <= %.12g\n" % (lp.lo[j], names[j], lp.hi[j]))
    if milp.binary_cols:
        stream.write("binary\n  %s\n" % " ".join(names[c] for c in milp.binary_cols))
    stream.write("end\n")
