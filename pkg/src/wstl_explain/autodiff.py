"""A small reverse-mode tape over numpy arrays.

Only the primitives the template loss needs are supported: elementwise
arithmetic with broadcasting, ``exp``, ``maximum``, reductions, indexing,
the masked simplex normalization of a score vector and the weighted
exponential-ratio aggregation.  Operations whose inputs are all constants
are evaluated directly and never recorded.

    value, tape = forward_record(lambda x: (x * x).sum(), np.array([1.0, 2.0]))
    gradient(tape)  # array([2., 4.])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError


@dataclass
class _Node:
    value: np.ndarray
    parents: tuple[int, ...]
    vjps: tuple[Callable[[np.ndarray], np.ndarray], ...]
    kind: str


@dataclass
class Tape:
    nodes: list[_Node] = field(default_factory=list)
    output: int | None = None
    n_inputs: int = 0
    input_shape: tuple[int, ...] = ()

    def record(self, kind, value, parents=(), vjps=()) -> "Var":
        self.nodes.append(_Node(np.asarray(value, dtype=float), tuple(parents), tuple(vjps), kind))
        return Var(self, len(self.nodes) - 1)


class Var:
    """Handle to a recorded node.  Supports the usual arithmetic operators."""

    __slots__ = ("tape", "index")
    __array_priority__ = 100

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.tape.nodes[self.index].kind}, shape={self.shape})"

    __add__ = lambda a, b: add(a, b)
    __radd__ = lambda a, b: add(b, a)
    __sub__ = lambda a, b: sub(a, b)
    __rsub__ = lambda a, b: sub(b, a)
    __mul__ = lambda a, b: mul(a, b)
    __rmul__ = lambda a, b: mul(b, a)
    __truediv__ = lambda a, b: div(a, b)
    __rtruediv__ = lambda a, b: div(b, a)
    __neg__ = lambda a: mul(a, -1.0)
    __getitem__ = lambda a, idx: getitem(a, idx)

    def sum(self, axis=None):
        return sum_(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _binary(kind, a, b, value, da, db):
    tape = _tape_of(a, b)
    if tape is None:
        return value
    parents, vjps = [], []
    for x, d in ((a, da), (b, db)):
        if isinstance(x, Var):
            shape = x.shape
            parents.append(x.index)
            vjps.append(lambda g, d=d, shape=shape: _unbroadcast(d(g), shape))
    return tape.record(kind, value, parents, vjps)


def add(a, b):
    return _binary("add", a, b, value_of(a) + value_of(b), lambda g: g, lambda g: g)


def sub(a, b):
    return _binary("sub", a, b, value_of(a) - value_of(b), lambda g: g, lambda g: -g)


def mul(a, b):
    va, vb = value_of(a), value_of(b)
    return _binary("mul", a, b, va * vb, lambda g: g * vb, lambda g: g * va)


def div(a, b):
    va, vb = value_of(a), value_of(b)
    if np.any(vb == 0):
        raise DomainError("division by zero")
    out = va / vb
    return _binary("div", a, b, out, lambda g: g / vb, lambda g: -g * out / vb)


def maximum(a, b):
    """Elementwise max; ties send the whole gradient to ``a``."""
    va, vb = value_of(a), value_of(b)
    first = va >= vb
    return _binary(
        "max", a, b, np.where(first, va, vb),
        lambda g: np.where(first, g, 0.0), lambda g: np.where(first, 0.0, g),
    )


def exp(a):
    out = np.exp(value_of(a))
    if not isinstance(a, Var):
        return out
    return a.tape.record("exp", out, (a.index,), (lambda g: g * out,))


def sum_(a, axis=None):
    va = value_of(a)
    out = va.sum(axis=axis)
    if not isinstance(a, Var):
        return out

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, va.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), va.shape).copy()

    return a.tape.record("sum", out, (a.index,), (vjp,))


def mean(a, axis=None):
    n = value_of(a).size if axis is None else value_of(a).shape[axis]
    return mul(sum_(a, axis), 1.0 / n)


def reshape(a, shape):
    va = value_of(a)
    out = va.reshape(shape)
    if not isinstance(a, Var):
        return out
    return a.tape.record("reshape", out, (a.index,), (lambda g: g.reshape(va.shape),))


def getitem(a, idx):
    va = value_of(a)
    out = va[idx]
    if not isinstance(a, Var):
        return out

    def vjp(g):
        full = np.zeros_like(va)
        np.add.at(full, idx, g)
        return full

    return a.tape.record("getitem", out, (a.index,), (vjp,))


def stack(items: Sequence, axis: int = 0):
    vals = [value_of(x) for x in items]
    out = np.stack(vals, axis=axis)
    tape = _tape_of(*items)
    if tape is None:
        return out
    parents, vjps = [], []
    for k, x in enumerate(items):
        if isinstance(x, Var):
            parents.append(x.index)
            vjps.append(lambda g, k=k: np.take(g, k, axis=axis))
    return tape.record("stack", out, parents, vjps)


def simplex(scores, mask: np.ndarray):
    """Masked softmax over the whole array: ``mask*exp(s) / sum(mask*exp(s))``.

    Masked entries are exactly zero and receive zero gradient.
    """
    s = value_of(scores)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DomainError("simplex normalization over an empty mask")
    shift = s[mask].max()
    e = np.where(mask, np.exp(np.where(mask, s - shift, 0.0)), 0.0)
    p = e / e.sum()
    if not isinstance(scores, Var):
        return p
    return scores.tape.record(
        "simplex", p, (scores.index,), (lambda g: p * (g - np.sum(p * g)),)
    )


def ratio_aggregate(w, r, sign: float, sigma: float, axis: int):
    """Weighted exponential-ratio aggregation of ``r`` along ``axis``.

    Computes ``sum(w r e) / sum(w e)`` with ``e = exp(sign * r / sigma)``;
    ``w`` broadcasts against ``r``.  Entries with zero weight are excluded
    from both sums, and the exponent is shifted by its maximum over the
    included entries so small ``sigma`` cannot overflow.
    """
    vw, vr = value_of(w), value_of(r)
    vw_full = np.broadcast_to(vw, np.broadcast_shapes(vw.shape, vr.shape))
    vr_full = np.broadcast_to(vr, vw_full.shape)
    live = vw_full > 0
    if not live.any(axis=axis).all():
        raise DomainError("ratio aggregation with all-zero effective weights")
    z = np.where(live, sign * vr_full / sigma, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.where(live, np.exp(z), 0.0)
    we = vw_full * e
    den = we.sum(axis=axis, keepdims=True)
    p = we / den
    out_k = (p * vr_full).sum(axis=axis, keepdims=True)
    out = np.squeeze(out_k, axis=axis)

    tape = _tape_of(w, r)
    if tape is None:
        return out
    parents, vjps = [], []
    if isinstance(w, Var):
        dw = e * (vr_full - out_k) / den
        parents.append(w.index)
        vjps.append(lambda g: _unbroadcast(np.expand_dims(g, axis) * dw, vw.shape))
    if isinstance(r, Var):
        dr = p * (1.0 + (sign / sigma) * (vr_full - out_k))
        parents.append(r.index)
        vjps.append(lambda g: _unbroadcast(np.expand_dims(g, axis) * dr, vr.shape))
    return tape.record("ratio", out, parents, vjps)


def forward_record(fn: Callable[[Var], object], inputs) -> tuple[float, Tape]:
    """Evaluate ``fn`` on a fresh input variable and keep the tape for backprop."""
    inputs = np.asarray(inputs, dtype=float)
    tape = Tape(n_inputs=inputs.size, input_shape=inputs.shape)
    x = tape.record("input", inputs.copy())
    out = fn(x)
    if isinstance(out, Var):
        if out.value.size != 1:
            raise ValueError("forward_record expects a scalar output")
        tape.output = out.index
    return float(np.asarray(value_of(out)).reshape(())), tape


def gradient(tape: Tape) -> np.ndarray:
    """d(output)/d(inputs) by one reverse sweep over the tape."""
    if tape.output is None:
        return np.zeros(tape.input_shape)
    adj: list[np.ndarray | None] = [None] * len(tape.nodes)
    adj[tape.output] = np.ones_like(tape.nodes[tape.output].value)
    for i in range(tape.output, -1, -1):
        g = adj[i]
        if g is None:
            continue
        node = tape.nodes[i]
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            adj[parent] = contrib if adj[parent] is None else adj[parent] + contrib
    g0 = adj[0]
    return np.zeros(tape.input_shape) if g0 is None else np.asarray(g0, dtype=float).reshape(tape.input_shape)
