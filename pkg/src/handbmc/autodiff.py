"""Reverse-mode automatic differentiation on numpy arrays.

Every loss in the toolkit is assembled from the operations in this
module so that the exact gradient with respect to all 63 joint
coordinates comes out of one backward pass.  A :class:`Var` wraps a
float64 array (any shape, typically ``(..., 21, 3)`` for a pose or a
batch of poses) and records parents plus vector-Jacobian closures; the
same pipeline code runs on plain ndarrays when only values are needed.

Subgradient conventions (fixed, relied on by tests):

* ``where``/``minimum``/``maximum`` route the gradient to exactly one
  branch; at ties the first argument wins.  Interval penalties use
  strict comparisons, so the gradient is 0 exactly at interval
  endpoints (the feasible side).
* ``arccos`` clamps its argument to [-1, 1] for the value.  The
  derivative is 0 for |u| >= 1 (the clamped branch is constant) and
  -1/sqrt(1-u^2) with |u| capped at 1 - 1e-12 inside.
* ``sqrt`` keeps its exact value but floors the derivative's
  denominator at 1e-12, so zero-length bones give finite (zero-pulling)
  gradients instead of infinities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_SQRT_FLOOR = 1e-12
_ACOS_CAP = 1.0 - 1e-12


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over broadcast axes so it matches `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """Array value tracked on the tape.  Math operators build new nodes."""

    __slots__ = ("value", "_parents", "_vjps")

    # make `ndarray <op> Var` defer to the reflected Var operator
    __array_ufunc__ = None

    def __init__(self, value, _parents=(), _vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self._parents = _parents
        self._vjps = _vjps

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.value!r})"

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Var):
            sa, sb = self.value.shape, other.value.shape
            return Var(self.value + other.value, (self, other),
                       (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)))
        c = np.asarray(other, dtype=np.float64)
        sa = self.value.shape
        return Var(self.value + c, (self,), (lambda g: _unbroadcast(g, sa),))

    __radd__ = __add__

    def __neg__(self):
        sa = self.value.shape
        return Var(-self.value, (self,), (lambda g: _unbroadcast(-g, sa),))

    def __sub__(self, other):
        if isinstance(other, Var):
            sa, sb = self.value.shape, other.value.shape
            return Var(self.value - other.value, (self, other),
                       (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(-g, sb)))
        c = np.asarray(other, dtype=np.float64)
        sa = self.value.shape
        return Var(self.value - c, (self,), (lambda g: _unbroadcast(g, sa),))

    def __rsub__(self, other):
        c = np.asarray(other, dtype=np.float64)
        sa = self.value.shape
        return Var(c - self.value, (self,), (lambda g: _unbroadcast(-g, sa),))

    def __mul__(self, other):
        if isinstance(other, Var):
            va, vb = self.value, other.value
            return Var(va * vb, (self, other),
                       (lambda g: _unbroadcast(g * vb, va.shape),
                        lambda g: _unbroadcast(g * va, vb.shape)))
        c = np.asarray(other, dtype=np.float64)
        va = self.value
        return Var(va * c, (self,), (lambda g: _unbroadcast(g * c, va.shape),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            va, vb = self.value, other.value
            return Var(va / vb, (self, other),
                       (lambda g: _unbroadcast(g / vb, va.shape),
                        lambda g: _unbroadcast(-g * va / (vb * vb), vb.shape)))
        c = np.asarray(other, dtype=np.float64)
        va = self.value
        return Var(va / c, (self,), (lambda g: _unbroadcast(g / c, va.shape),))

    def __rtruediv__(self, other):
        c = np.asarray(other, dtype=np.float64)
        va = self.value
        return Var(c / va, (self,), (lambda g: _unbroadcast(-g * c / (va * va), va.shape),))

    def __pow__(self, p):
        p = float(p)
        va = self.value
        return Var(va ** p, (self,), (lambda g: _unbroadcast(g * p * va ** (p - 1.0), va.shape),))

    # -- comparisons return plain boolean arrays ----------------------

    def __lt__(self, other):
        return self.value < val(other)

    def __le__(self, other):
        return self.value <= val(other)

    def __gt__(self, other):
        return self.value > val(other)

    def __ge__(self, other):
        return self.value >= val(other)

    # -- indexing ------------------------------------------------------

    def __getitem__(self, key):
        va = self.value

        def vjp(g):
            out = np.zeros_like(va)
            np.add.at(out, key, g)
            return out

        return Var(va[key], (self,), (vjp,))


def val(x) -> np.ndarray:
    """Value of a Var, or the input itself for plain arrays/scalars."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _is_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


# -- elementwise functions (Var or ndarray in, same kind out) ----------

def sqrt(x):
    if isinstance(x, Var):
        root = np.sqrt(x.value)
        safe = np.maximum(root, _SQRT_FLOOR)
        return Var(root, (x,), (lambda g: _unbroadcast(g * (0.5 / safe), x.value.shape),))
    return np.sqrt(x)


def sin(x):
    if isinstance(x, Var):
        va = x.value
        return Var(np.sin(va), (x,), (lambda g: _unbroadcast(g * np.cos(va), va.shape),))
    return np.sin(x)


def cos(x):
    if isinstance(x, Var):
        va = x.value
        return Var(np.cos(va), (x,), (lambda g: _unbroadcast(-g * np.sin(va), va.shape),))
    return np.cos(x)


def arccos(x):
    if isinstance(x, Var):
        va = x.value
        out = np.arccos(np.clip(va, -1.0, 1.0))
        inside = np.abs(va) < 1.0
        capped = np.clip(va, -_ACOS_CAP, _ACOS_CAP)
        slope = np.where(inside, -1.0 / np.sqrt(1.0 - capped * capped), 0.0)
        return Var(out, (x,), (lambda g: _unbroadcast(g * slope, va.shape),))
    return np.arccos(np.clip(x, -1.0, 1.0))


def where(cond, a, b):
    """Select per element; gradient flows only into the taken branch."""
    cond = np.asarray(cond, dtype=bool)
    if not _is_var(a, b):
        return np.where(cond, a, b)
    value = np.where(cond, val(a), val(b))
    parents, vjps = [], []
    if isinstance(a, Var):
        sa = a.value.shape
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(np.where(cond, g, 0.0), sa))
    if isinstance(b, Var):
        sb = b.value.shape
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(np.where(cond, 0.0, g), sb))
    return Var(value, tuple(parents), tuple(vjps))


def minimum(a, b):
    """Elementwise min; at ties the first argument carries the gradient."""
    return where(val(a) <= val(b), a, b)


def maximum(a, b):
    """Elementwise max; at ties the first argument carries the gradient."""
    return where(val(a) >= val(b), a, b)


def absolute(x):
    """|x| with subgradient +1 at 0 (the x >= 0 branch)."""
    return where(val(x) >= 0.0, x, -x)


def clip(x, lo, hi):
    """Clamp to [lo, hi]; at the boundaries the interior branch wins."""
    inner = where(val(x) > hi, hi * _ones_like(x), x)
    return where(val(x) < lo, lo * _ones_like(x), inner)


def _ones_like(x):
    return np.ones_like(val(x))


# -- reductions and structure ops --------------------------------------

def vsum(x, axis=-1):
    if isinstance(x, Var):
        va = x.value
        n = va.shape[axis]

        def vjp(g):
            return np.repeat(np.expand_dims(g, axis), n, axis=axis)

        return Var(va.sum(axis=axis), (x,), (vjp,))
    return np.asarray(x).sum(axis=axis)


def vmean(x, axis=-1):
    n = val(x).shape[axis]
    return vsum(x, axis=axis) / float(n)


def vmin(x, axis=-1):
    """Min along axis; gradient goes to the first minimizing entry."""
    if isinstance(x, Var):
        va = x.value
        am = np.argmin(va, axis=axis)

        def vjp(g):
            out = np.zeros_like(va)
            idx = np.expand_dims(am, axis)
            np.put_along_axis(out, idx, np.expand_dims(g, axis), axis=axis)
            return out

        return Var(va.min(axis=axis), (x,), (vjp,))
    return np.asarray(x).min(axis=axis)


def take(x, indices, axis):
    """np.take with a gradient (duplicate indices accumulate)."""
    if isinstance(x, Var):
        va = x.value
        ax = axis % va.ndim

        def vjp(g):
            out = np.zeros_like(va)
            key = (slice(None),) * ax + (indices,)
            np.add.at(out, key, g)
            return out

        return Var(np.take(va, indices, axis=ax), (x,), (vjp,))
    return np.take(np.asarray(x), indices, axis=axis)


def stack(xs: Sequence, axis=-1):
    if not _is_var(*xs):
        return np.stack(xs, axis=axis)
    values = [val(x) for x in xs]
    out = np.stack(values, axis=axis)
    ax = axis % out.ndim
    parents, vjps = [], []
    for i, x in enumerate(xs):
        if isinstance(x, Var):
            parents.append(x)
            vjps.append(lambda g, i=i: np.take(g, i, axis=ax))
    # constants contribute nothing; Var positions pick their slice
    return Var(out, tuple(parents), tuple(vjps))


def concat(xs: Sequence, axis):
    if not _is_var(*xs):
        return np.concatenate(xs, axis=axis)
    values = [val(x) for x in xs]
    out = np.concatenate(values, axis=axis)
    ax = axis % out.ndim
    parents, vjps = [], []
    start = 0
    for x, v in zip(xs, values):
        stop = start + v.shape[ax]
        if isinstance(x, Var):
            parents.append(x)
            sl = (slice(None),) * ax + (slice(start, stop),)
            vjps.append(lambda g, sl=sl: g[sl])
        start = stop
    return Var(out, tuple(parents), tuple(vjps))


def reshape(x, shape):
    if isinstance(x, Var):
        old = x.value.shape
        return Var(x.value.reshape(shape), (x,), (lambda g: g.reshape(old),))
    return np.asarray(x).reshape(shape)


def expand_last(x):
    """Append a trailing length-1 axis (for broadcasting against edges)."""
    return reshape(x, val(x).shape + (1,))


# -- backward pass ------------------------------------------------------

def _topo(root: Var) -> list[Var]:
    """Nodes in an order where every node appears after its parents."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Var, wrt: Var | Sequence[Var]):
    """Gradients of the (elementwise-summed) output w.r.t. `wrt`.

    The seed is all-ones over the output's shape, i.e. for a batch of
    scalar losses every batch element is differentiated independently.
    """
    single = isinstance(wrt, Var)
    targets = [wrt] if single else list(wrt)
    target_ids = {id(t) for t in targets}
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
    results: dict[int, np.ndarray] = {}
    for node in reversed(_topo(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if id(node) in target_ids:
            results[id(node)] = g
        for parent, vjp in zip(node._parents, node._vjps):
            contrib = vjp(g)
            acc = grads.get(id(parent))
            grads[id(parent)] = contrib if acc is None else acc + contrib
    out = [results.get(id(t), np.zeros_like(t.value)) for t in targets]
    return out[0] if single else out


@dataclass
class GradientReport:
    """Loss value, d(loss)/d(joint coordinates), and kink flags.

    `nondifferentiable[j]` marks joints whose coordinates sit exactly on
    a kink/clamp/boundary of the differentiated loss (only the BMC loss
    pipeline fills these in; `grad` over an arbitrary callable cannot
    know its kinks and leaves them False).
    """

    value: float
    gradient: np.ndarray
    nondifferentiable: np.ndarray = field(default_factory=lambda: np.zeros(21, dtype=bool))

    def __post_init__(self):
        self.gradient = np.asarray(self.gradient, dtype=np.float64)
        if self.gradient.shape != (21, 3):
            raise ValueError(f"gradient must be 21x3, got {self.gradient.shape}")
        self.nondifferentiable = np.asarray(self.nondifferentiable, dtype=bool)


def grad(loss_fn: Callable[[Var], Var], pose) -> GradientReport:
    """Evaluate `loss_fn` on a pose and return value plus exact gradient.

    `loss_fn` receives the joints as a (21, 3) :class:`Var` and must
    build its result from the operations of this module.
    """
    joints = np.asarray(getattr(pose, "joints", pose), dtype=np.float64)
    j = Var(joints)
    out = loss_fn(j)
    if not isinstance(out, Var):
        return GradientReport(value=float(out), gradient=np.zeros((21, 3)))
    g = backward(out, j)
    return GradientReport(value=float(out.value), gradient=g)
