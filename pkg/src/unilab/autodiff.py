"""Minimal reverse-mode differentiation over a fixed set of matrix primitives.

A :class:`Tape` records each primitive application as it happens (a Wengert
list). Every public op in this module accepts either plain arrays or
:class:`Var` handles; with no ``Var`` among its tensor arguments an op simply
evaluates the forward kernel and returns an ordinary value. Loss functions
written against these ops therefore run unchanged on arrays (for evaluation
and finite differences) and on a tape (for gradients).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import numeric
from .errors import DimensionError, EvaluationError, UnsupportedOperationError


@dataclass(frozen=True)
class Primitive:
    name: str
    forward: Callable
    # backward(g, out, *input_values, **params) -> one gradient per input
    backward: Callable


PRIMITIVES: dict[str, Primitive] = {}


def _register(name, forward, backward):
    PRIMITIVES[name] = Primitive(name, forward, backward)


@dataclass
class Record:
    op: str
    inputs: tuple[int, ...]
    output: int
    params: dict = field(default_factory=dict)


class Tape:
    """Single-writer record of primitive applications."""

    def __init__(self):
        self.values: list = []
        self.records: list[Record] = []
        self.leaves: dict[str, int] = {}
        self._constant: list[bool] = []

    def _push(self, value, constant: bool) -> int:
        self.values.append(value)
        self._constant.append(constant)
        return len(self.values) - 1

    def leaf(self, name: str, value) -> "Var":
        if name in self.leaves:
            raise ValueError(f"duplicate input name {name!r}")
        value = np.array(value, dtype=np.float64)
        idx = self._push(value, constant=False)
        self.leaves[name] = idx
        return Var(self, idx)

    def _operand(self, x) -> int:
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValueError("operands recorded on different tapes")
            return x.index
        return self._push(np.asarray(x, dtype=np.float64), constant=True)

    def apply(self, op: str, args, params) -> "Var":
        prim = PRIMITIVES[op]
        idx = tuple(self._operand(a) for a in args)
        out = prim.forward(*(self.values[i] for i in idx), **params)
        o = self._push(out, constant=False)
        self.records.append(Record(op, idx, o, dict(params)))
        return Var(self, o)

    def backward(self, output: "Var") -> dict[str, np.ndarray]:
        if np.shape(output.value) != ():
            raise DimensionError(f"gradient needs a scalar output, got shape {output.shape}")
        adj: dict[int, np.ndarray] = {output.index: np.float64(1.0)}
        for rec in reversed(self.records):
            g = adj.pop(rec.output, None)
            if g is None:
                continue
            vals = [self.values[i] for i in rec.inputs]
            grads = PRIMITIVES[rec.op].backward(g, self.values[rec.output], *vals, **rec.params)
            for i, gi in zip(rec.inputs, grads):
                if self._constant[i]:
                    continue
                adj[i] = adj[i] + gi if i in adj else gi
        out = {}
        for name, i in self.leaves.items():
            g = adj.get(i)
            out[name] = np.zeros_like(self.values[i]) if g is None else np.asarray(g, dtype=np.float64)
        return out

    def replay(self, leaf_values: Mapping[str, np.ndarray] | None = None) -> list:
        """Re-run every record forward from the leaves; returns the new value list."""
        values = list(self.values)
        for name, v in (leaf_values or {}).items():
            values[self.leaves[name]] = np.array(v, dtype=np.float64)
        for rec in self.records:
            prim = PRIMITIVES[rec.op]
            values[rec.output] = prim.forward(*(values[i] for i in rec.inputs), **rec.params)
        return values


_UFUNCS = {}  # filled after the ops are defined


class Var:
    """Handle to a value recorded on a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.values[self.index]

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return len(self.shape)

    def __len__(self):
        return self.shape[0]

    def __repr__(self):
        return f"Var(shape={self.shape}, index={self.index})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise UnsupportedOperationError("division by a recorded value is not a registered primitive")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return sum_(self, axis=axis)

    def __array__(self, *args, **kwargs):
        raise UnsupportedOperationError("a recorded value cannot be converted to a plain array")

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        op = _UFUNCS.get(ufunc)
        if op is None or method != "__call__" or kwargs:
            raise UnsupportedOperationError(f"numpy ufunc {ufunc.__name__!r} is not a registered primitive")
        return op(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        raise UnsupportedOperationError(f"numpy function {func.__name__!r} is not a registered primitive")

    def __float__(self):
        raise UnsupportedOperationError("a recorded value cannot be converted to float")


def _tape_of(args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _op(name, *args, **params):
    tape = _tape_of(args)
    if tape is None:
        vals = [np.asarray(a, dtype=np.float64) for a in args]
        return PRIMITIVES[name].forward(*vals, **params)
    return tape.apply(name, args, params)


def value_of(x):
    """The numeric value behind ``x``, whether it is recorded or not."""
    return x.value if isinstance(x, Var) else x


def _unbroadcast(g, shape):
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# elementwise arithmetic

_register("add", lambda a, b: a + b,
          lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
_register("sub", lambda a, b: a - b,
          lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
_register("mul", lambda a, b: a * b,
          lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)))
_register("scale", lambda a, c: a * c, lambda g, out, a, c: (g * c,))
_register("exp", np.exp, lambda g, out, a: (g * out,))
_register("log", np.log, lambda g, out, a: (g / a,))
_register("tanh", np.tanh, lambda g, out, a: (g * (1.0 - out * out),))


def add(a, b):
    return _op("add", a, b)


def sub(a, b):
    return _op("sub", a, b)


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    return _op("mul", a, b)


def scale(a, c: float):
    return _op("scale", a, c=float(c))


def exp(a):
    return _op("exp", a)


def log(a):
    return _op("log", a)


def tanh(a):
    return _op("tanh", a)


# linear algebra


def _matmul_backward(g, out, a, b):
    if a.ndim == 2 and b.ndim == 2:
        return g @ b.T, a.T @ g
    if a.ndim == 2:
        return np.outer(g, b), a.T @ g
    if b.ndim == 2:
        return b @ g, np.outer(a, g)
    return g * b, g * a


def _matmul(a, b):
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError("matmul supports rank 1 and 2 only")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return a @ b


_register("matmul", _matmul, _matmul_backward)


def matmul(a, b):
    return _op("matmul", a, b)


def _dot(a, b):
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"dot needs equal-length vectors, got {a.shape} and {b.shape}")
    return a @ b


_register("dot", _dot, lambda g, out, a, b: (g * b, g * a))


def dot(a, b):
    return _op("dot", a, b)


def _norm(a):
    if a.ndim != 1:
        raise DimensionError("norm is defined for vectors")
    return np.sqrt(a @ a)


_register("norm", _norm, lambda g, out, a: (g * a / out,))


def norm(a):
    """Euclidean norm of a vector."""
    return _op("norm", a)


def _cosine_backward(g, out, a, b):
    na, nb = np.sqrt(a @ a), np.sqrt(b @ b)
    cos = (a @ b) / (na * nb)
    return (g * (b / (na * nb) - cos * a / (na * na)),
            g * (a / (na * nb) - cos * b / (nb * nb)))


_register("cosine", lambda a, b: np.float64(numeric.cosine(a, b)), _cosine_backward)


def cosine(a, b):
    return _op("cosine", a, b)


def _cosine_matrix_backward(g, out, a, b):
    na, nb = numeric.row_norms(a), numeric.row_norms(b)
    ah, bh = a / na[:, None], b / nb[:, None]
    c = ah @ bh.T
    gc = g * c
    ga = (g @ bh - gc.sum(axis=1)[:, None] * ah) / na[:, None]
    gb = (g.T @ ah - gc.sum(axis=0)[:, None] * bh) / nb[:, None]
    return ga, gb


_register("cosine_matrix", numeric.cosine_matrix, _cosine_matrix_backward)


def cosine_matrix(a, b):
    """Pairwise row cosines; the fused matrix form of :func:`cosine`."""
    return _op("cosine_matrix", a, b)


# reductions


def _sum_backward(g, out, a, axis):
    if axis is None:
        return (np.full(a.shape, g, dtype=np.float64),)
    return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)


_register("sum", lambda a, axis: np.sum(a, axis=axis), _sum_backward)


def sum_(a, axis=None):
    return _op("sum", a, axis=axis)


def _lse_backward(g, out, a, axis):
    if axis is None:
        return (g * np.exp(a - out),)
    return (np.expand_dims(g, axis) * np.exp(a - np.expand_dims(out, axis)),)


_register("logsumexp", lambda a, axis: np.float64(numeric.logsumexp(a)) if axis is None
          else numeric.logsumexp(a, axis=axis), _lse_backward)


def logsumexp(a, axis=None):
    return _op("logsumexp", a, axis=axis)


def _softmax_backward(g, out, a, temperature):
    return (out * (g - np.sum(g * out, axis=1, keepdims=True)) / temperature,)


_register("softmax_rows", lambda a, temperature: numeric.softmax_rows(a, temperature), _softmax_backward)


def softmax_rows(a, temperature: float = 1.0):
    return _op("softmax_rows", a, temperature=float(temperature))


# structural


def _getitem_backward(g, out, a, key):
    z = np.zeros_like(a)
    if isinstance(key, (slice, int)):
        z[key] = g  # basic indexing never repeats an element
    else:
        np.add.at(z, key, g)
    return (z,)


_register("getitem", lambda a, key: a[key], _getitem_backward)


def getitem(a, key):
    return _op("getitem", a, key=key)


_register("transpose", lambda a: a.T, lambda g, out, a: (g.T,))


def transpose(a):
    return _op("transpose", a)


_register("reshape", lambda a, shape: a.reshape(shape), lambda g, out, a, shape: (g.reshape(a.shape),))


def reshape(a, shape):
    return _op("reshape", a, shape=tuple(shape))


_register("diagonal", lambda a: np.diagonal(a).copy(), lambda g, out, a: (np.diag(g),))


def diagonal(a):
    """Main diagonal of a square matrix."""
    return _op("diagonal", a)


def _concat(*parts):
    return np.concatenate([np.atleast_2d(p) for p in parts], axis=0)


def _concat_backward(g, out, *parts):
    grads, start = [], 0
    for p in parts:
        rows = 1 if p.ndim == 1 else p.shape[0]
        grads.append(g[start:start + rows].reshape(p.shape))
        start += rows
    return tuple(grads)


_register("concat_rows", _concat, _concat_backward)


def concat_rows(parts):
    """Stack matrices (and vectors, as single rows) along the row axis."""
    return _op("concat_rows", *parts)


_UFUNCS.update({
    np.add: add, np.subtract: sub, np.multiply: mul, np.matmul: matmul,
    np.exp: exp, np.log: log, np.tanh: tanh,
    np.negative: lambda a: scale(a, -1.0),
    np.true_divide: lambda a, b: Var.__truediv__(a, b) if isinstance(a, Var) else _bad_div(),
})


def _bad_div():
    raise UnsupportedOperationError("division by a recorded value is not a registered primitive")


# gradients and the finite-difference oracle


def grad(loss_builder: Callable[[dict], object], inputs: Mapping[str, np.ndarray]):
    """Evaluate ``loss_builder`` on a fresh tape and differentiate it.

    ``loss_builder`` receives a dict of named variables and must return a
    scalar built only from the ops in this module. Returns the loss value and
    a dict mapping every input name to a gradient of the same shape.
    """
    tape = Tape()
    leaves = {name: tape.leaf(name, v) for name, v in inputs.items()}
    out = loss_builder(leaves)
    if not isinstance(out, Var):
        value = float(out)
        return value, {n: np.zeros_like(tape.values[i]) for n, i in tape.leaves.items()}
    grads = tape.backward(out)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise EvaluationError(f"non-finite gradient for input {name!r}", name=name)
    return float(out.value), grads


def record(loss_builder, inputs):
    """Build the tape without differentiating; returns ``(tape, output_var)``."""
    tape = Tape()
    leaves = {name: tape.leaf(name, v) for name, v in inputs.items()}
    return tape, loss_builder(leaves)


def finite_diff(loss_builder, inputs: Mapping[str, np.ndarray], h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradient, one coordinate at a time."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    base = {n: np.array(v, dtype=np.float64) for n, v in inputs.items()}
    out = {}
    for name, x in base.items():
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + h
            fp = float(loss_builder(base))
            x[idx] = orig - h
            fm = float(loss_builder(base))
            x[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise EvaluationError(f"non-finite loss probing {name}{list(idx)}", name=name, index=idx)
            g[idx] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


def max_relative_error(analytic: Mapping[str, np.ndarray], numeric_: Mapping[str, np.ndarray],
                       floor: float = 1e-8) -> float:
    """max |g - g_fd| / max(|g|, floor) over every coordinate of every input."""
    worst = 0.0
    for name, g in analytic.items():
        g = np.asarray(g)
        err = np.abs(g - numeric_[name]) / np.maximum(np.abs(g), floor)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
