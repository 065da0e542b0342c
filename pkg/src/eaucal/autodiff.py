"""Reverse-mode automatic differentiation over an append-only tape.

Values are float64 scalars, vectors or matrices (ndim <= 2, C-contiguous).
Forward evaluation is eager; `Tape.backward` replays the tape in reverse
and accumulates one adjoint per edge.  Elementwise binary ops require
identical shapes, except that either operand may be a scalar; anything
richer must be spelled out explicitly (e.g. bias rows are tiled with a
ones-column matmul), which keeps shape bugs loud.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K


def _contig(x):
    # np.ascontiguousarray would promote 0-d to 1-d; order="C" does not.
    return np.asarray(x, dtype=np.float64, order="C")


def _as_value(x):
    v = _contig(x)
    if v.ndim > 2:
        raise ValueError(f"values must be scalar, vector or matrix; got shape {v.shape}")
    return v


class Node:
    """Lightweight handle to one tape entry."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape._values[self.idx]

    @property
    def adjoint(self):
        adj = self.tape._adjoints[self.idx]
        if adj is None:
            return np.zeros_like(self.value)
        return adj

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.tape._ops[self.idx]}#{self.idx}, shape={self.shape})"

    def _lift(self, other):
        if isinstance(other, Node):
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, self._lift(other))

    def __rsub__(self, other):
        return subtract(self._lift(other), self)

    def __mul__(self, other):
        if isinstance(other, Node):
            return multiply(self, other)
        return scalar_multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only computation record; single-threaded per instance."""

    def __init__(self):
        self._values = []
        self._ops = []
        self._parents = []
        self._aux = []
        self._adjoints = []
        self.leaf_ids = []

    def _append(self, op, parents, value, aux=None):
        self._values.append(value)
        self._ops.append(op)
        self._parents.append(parents)
        self._aux.append(aux)
        self._adjoints.append(None)
        return Node(self, len(self._values) - 1)

    def leaf(self, value):
        """Record a trainable input; its gradient is reported by backward."""
        node = self._append("leaf", (), _as_value(value))
        self.leaf_ids.append(node.idx)
        return node

    def constant(self, value):
        """Record a non-trainable input."""
        return self._append("const", (), _as_value(value))

    def __len__(self):
        return len(self._values)

    def zero_adjoints(self):
        self._adjoints = [None] * len(self._values)

    def backward(self, root):
        """Accumulate adjoints from a scalar `root`; return {leaf idx: gradient}.

        Adjoints are reset first, so repeated calls are reproducible.
        """
        if root.tape is not self:
            raise ValueError("backward: root node belongs to a different tape")
        if root.value.shape != ():
            raise ValueError(f"backward: root must be scalar, got shape {root.value.shape}")
        adj = [None] * len(self._values)
        adj[root.idx] = np.ones(())
        for i in range(root.idx, -1, -1):
            g = adj[i]
            if g is None:
                continue
            handler = _BACKWARD.get(self._ops[i])
            if handler is not None:
                handler(self, i, g, adj)
        self._adjoints = adj
        return {
            lid: (adj[lid].copy() if adj[lid] is not None else np.zeros_like(self._values[lid]))
            for lid in self.leaf_ids
        }


def _same_tape(op, *nodes):
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ValueError(f"{op}: operands belong to different tapes")
    return tape


def _binary(op, kernel, a, b):
    tape = _same_tape(op, a, b)
    av, bv = a.value, b.value
    if av.shape == bv.shape:
        out = kernel(av, bv)
    elif av.shape == () or bv.shape == ():
        out = {"add": np.add, "sub": np.subtract, "mul": np.multiply}[op](av, bv)
    else:
        raise ValueError(f"{op}: shapes {av.shape} and {bv.shape} do not conform")
    return tape._append(op, (a.idx, b.idx), _contig(out))


def add(a, b):
    return _binary("add", K.add, a, b)


def subtract(a, b):
    return _binary("sub", K.sub, a, b)


def multiply(a, b):
    """Elementwise product (same shapes, or one scalar operand)."""
    return _binary("mul", K.mul, a, b)


def scalar_multiply(a, c):
    return a.tape._append("smul", (a.idx,), K.scale(a.value, float(c)), float(c))


def negate(a):
    return a.tape._append("neg", (a.idx,), K.neg(a.value))


def matmul(a, b):
    tape = _same_tape("matmul", a, b)
    av, bv = a.value, b.value
    ok = (
        (av.ndim == 2 and bv.ndim == 2 and av.shape[1] == bv.shape[0])
        or (av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0])
        or (av.ndim == 1 and bv.ndim == 2 and av.shape[0] == bv.shape[0])
    )
    if not ok:
        raise ValueError(f"matmul: shapes {av.shape} and {bv.shape} do not conform")
    return tape._append("matmul", (a.idx, b.idx), _contig(av @ bv))


def _unary(op, kernel, a, aux=None):
    return a.tape._append(op, (a.idx,), kernel(a.value), aux)


def tanh(a):
    return _unary("tanh", K.tanh, a)


def sigmoid(a):
    return _unary("sigmoid", K.sigmoid, a)


def relu(a):
    return _unary("relu", K.relu, a)


def exp(a):
    return _unary("exp", K.exp, a)


def log(a):
    if np.any(a.value <= 0.0):
        raise ValueError("log: non-positive input (add an epsilon explicitly)")
    return _unary("log", K.log, a)


def sqrt(a):
    if np.any(a.value < 0.0):
        raise ValueError("sqrt: negative input")
    return _unary("sqrt", K.sqrt, a)


def clamp(a, lo, hi):
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError(f"clamp: lo ({lo}) must be < hi ({hi})")
    return a.tape._append("clamp", (a.idx,), K.clamp(a.value, lo, hi), (lo, hi))


def stop_gradient(a):
    """Copy the value; adjoint flow stops here."""
    return a.tape._append("stopgrad", (a.idx,), a.value.copy())


def _check_axis(op, value, axis):
    if axis is None:
        return
    if value.ndim == 0 or axis not in range(value.ndim):
        raise ValueError(f"{op}: axis {axis} invalid for shape {value.shape}")


def reduce_sum(a, axis=None):
    _check_axis("sum", a.value, axis)
    out = np.sum(a.value, axis=axis)
    return a.tape._append("sum", (a.idx,), _contig(out), axis)


def reduce_mean(a, axis=None):
    _check_axis("mean", a.value, axis)
    out = np.mean(a.value, axis=axis)
    count = a.value.size if axis is None else a.value.shape[axis]
    return a.tape._append("mean", (a.idx,), _contig(out), (axis, count))


def sumsq(a, axis=None):
    """Squared L2 norm: sum of elementwise squares, optionally per axis."""
    _check_axis("sumsq", a.value, axis)
    out = np.sum(np.square(a.value), axis=axis)
    return a.tape._append("sumsq", (a.idx,), _contig(out), axis)


def softmax(a):
    v = a.value
    if v.ndim != 1:
        raise ValueError(f"softmax: expected a vector, got shape {v.shape}")
    shifted = v - v.max()
    e = np.exp(shifted)
    return a.tape._append("softmax", (a.idx,), _contig(e / e.sum()))


OP_TABLE = {
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "matmul": matmul,
    "scalar_multiply": scalar_multiply,
    "negate": negate,
    "tanh": tanh,
    "log": log,
    "exp": exp,
    "sqrt": sqrt,
    "sumsq": sumsq,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "relu": relu,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "clamp": clamp,
    "stop_gradient": stop_gradient,
}


def apply(op, *nodes, **constants):
    """Generic entry point: `apply("tanh", x)` == `tanh(x)`."""
    fn = OP_TABLE.get(op)
    if fn is None:
        raise ValueError(f"unknown op {op!r}")
    return fn(*nodes, **constants)


# --- backward handlers ------------------------------------------------------


def _adj(tape, adj, j):
    if adj[j] is None:
        adj[j] = np.zeros_like(tape._values[j])
    return adj[j]


def _acc_maybe_scalar(tape, adj, j, g, out_shape, sign=1.0):
    # Scalar parent of a tensor-shaped op collects the summed adjoint.
    target = _adj(tape, adj, j)
    if tape._values[j].shape == out_shape:
        (K.acc_add if sign > 0 else K.acc_sub)(target, g)
    else:
        np.add(target, sign * np.sum(g), out=target)


def _bwd_add(tape, i, g, adj):
    pa, pb = tape._parents[i]
    shape = tape._values[i].shape
    _acc_maybe_scalar(tape, adj, pa, g, shape)
    _acc_maybe_scalar(tape, adj, pb, g, shape)


def _bwd_sub(tape, i, g, adj):
    pa, pb = tape._parents[i]
    shape = tape._values[i].shape
    _acc_maybe_scalar(tape, adj, pa, g, shape)
    _acc_maybe_scalar(tape, adj, pb, g, shape, sign=-1.0)


def _bwd_mul(tape, i, g, adj):
    pa, pb = tape._parents[i]
    av, bv = tape._values[pa], tape._values[pb]
    if av.shape == bv.shape:
        K.acc_prod(_adj(tape, adj, pa), g, bv)
        K.acc_prod(_adj(tape, adj, pb), g, av)
    elif bv.shape == ():  # tensor * scalar
        K.acc_scaled(_adj(tape, adj, pa), g, float(bv))
        np.add(_adj(tape, adj, pb), np.sum(g * av), out=_adj(tape, adj, pb))
    else:  # scalar * tensor
        np.add(_adj(tape, adj, pa), np.sum(g * bv), out=_adj(tape, adj, pa))
        K.acc_scaled(_adj(tape, adj, pb), g, float(av))


def _bwd_smul(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_scaled(_adj(tape, adj, pa), g, tape._aux[i])


def _bwd_neg(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_sub(_adj(tape, adj, pa), g)


def _bwd_matmul(tape, i, g, adj):
    pa, pb = tape._parents[i]
    av, bv = tape._values[pa], tape._values[pb]
    if av.ndim == 2 and bv.ndim == 2:
        ga, gb = g @ bv.T, av.T @ g
    elif av.ndim == 2 and bv.ndim == 1:
        ga, gb = np.outer(g, bv), av.T @ g
    else:  # vector @ matrix
        ga, gb = bv @ g, np.outer(av, g)
    K.acc_add(_adj(tape, adj, pa), _contig(ga))
    K.acc_add(_adj(tape, adj, pb), _contig(gb))


def _bwd_tanh(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_tanh(_adj(tape, adj, pa), g, tape._values[i])


def _bwd_sigmoid(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_sigmoid(_adj(tape, adj, pa), g, tape._values[i])


def _bwd_relu(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_relu(_adj(tape, adj, pa), g, tape._values[pa])


def _bwd_exp(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_exp(_adj(tape, adj, pa), g, tape._values[i])


def _bwd_log(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_log(_adj(tape, adj, pa), g, tape._values[pa])


def _bwd_sqrt(tape, i, g, adj):
    (pa,) = tape._parents[i]
    K.acc_sqrt(_adj(tape, adj, pa), g, tape._values[i])


def _bwd_clamp(tape, i, g, adj):
    (pa,) = tape._parents[i]
    lo, hi = tape._aux[i]
    K.acc_clamp(_adj(tape, adj, pa), g, tape._values[pa], lo, hi)


def _expand(g, axis, parent_shape):
    if axis is None:
        return g  # 0-d broadcasts against any shape
    if len(parent_shape) == 1:
        return g
    return g[None, :] if axis == 0 else g[:, None]


def _bwd_sum(tape, i, g, adj):
    (pa,) = tape._parents[i]
    target = _adj(tape, adj, pa)
    np.add(target, _expand(g, tape._aux[i], target.shape), out=target)


def _bwd_mean(tape, i, g, adj):
    (pa,) = tape._parents[i]
    axis, count = tape._aux[i]
    target = _adj(tape, adj, pa)
    np.add(target, _expand(g, axis, target.shape) / count, out=target)


def _bwd_sumsq(tape, i, g, adj):
    (pa,) = tape._parents[i]
    x = tape._values[pa]
    target = _adj(tape, adj, pa)
    np.add(target, 2.0 * x * _expand(g, tape._aux[i], target.shape), out=target)


def _bwd_softmax(tape, i, g, adj):
    (pa,) = tape._parents[i]
    y = tape._values[i]
    target = _adj(tape, adj, pa)
    np.add(target, y * (g - np.dot(g, y)), out=target)


_BACKWARD = {
    "add": _bwd_add,
    "sub": _bwd_sub,
    "mul": _bwd_mul,
    "smul": _bwd_smul,
    "neg": _bwd_neg,
    "matmul": _bwd_matmul,
    "tanh": _bwd_tanh,
    "sigmoid": _bwd_sigmoid,
    "relu": _bwd_relu,
    "exp": _bwd_exp,
    "log": _bwd_log,
    "sqrt": _bwd_sqrt,
    "clamp": _bwd_clamp,
    "sum": _bwd_sum,
    "mean": _bwd_mean,
    "sumsq": _bwd_sumsq,
    "softmax": _bwd_softmax,
}


# --- finite-difference oracle -----------------------------------------------


def grad_check(fn, point, step=1e-5):
    """Compare tape gradients of `fn(tape, x)` against central differences.

    Returns the max over coordinates of |analytic - numeric| / (|analytic| + 1e-12).
    `fn` must build a scalar output and be deterministic.
    """
    point = _as_value(point)
    tape = Tape()
    x = tape.leaf(point)
    out = fn(tape, x)
    if out.value.shape != ():
        raise ValueError("grad_check: fn must produce a scalar")
    analytic = tape.backward(out)[x.idx]

    def evaluate(p):
        t = Tape()
        return float(fn(t, t.leaf(p)).value)

    numeric = np.zeros_like(point)
    flat = point.ravel()
    num_flat = numeric.ravel()
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = step
        plus = evaluate((flat + bump).reshape(point.shape))
        minus = evaluate((flat - bump).reshape(point.shape))
        num_flat[i] = (plus - minus) / (2.0 * step)
    rel = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-12)
    return float(rel.max()) if rel.size else 0.0
