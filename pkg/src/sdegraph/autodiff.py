"""Tape-based reverse-mode differentiation over dense float64 numpy arrays.

Every operation builds a node holding its value, its parent nodes and a
local vector-Jacobian closure.  ``backward`` walks the graph once in
reverse topological order and accumulates gradients at the leaves.  The
tape is rebuilt on every forward pass; there is no higher-order mode.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError

# Debug-mode switch: when True every op asserts its output is finite.
CHECK_FINITE = False


def _as_value(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A node in the differentiation graph.

    ``value`` is a float64 ndarray, ``grad`` is filled by ``backward`` and
    has the same shape.  Leaves created with ``requires_grad=False`` are
    treated as constants and receive no gradient.
    """

    __slots__ = ("value", "grad", "parents", "vjp", "requires_grad")

    # Keep numpy from consuming Tensor operands in mixed expressions.
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None, requires_grad=True):
        self.value = _as_value(value)
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        if CHECK_FINITE and not np.all(np.isfinite(self.value)):
            raise DomainError("non-finite values in tensor")

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------
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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def constant(value) -> Tensor:
    """Wrap an array as a non-differentiable leaf."""
    return Tensor(value, requires_grad=False)


def parameter(value) -> Tensor:
    """Wrap an array as a trainable leaf."""
    return Tensor(np.array(value, dtype=np.float64))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        # Copy: the incoming array may alias another node's gradient.
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _make(value, parents, vjp):
    req = any(p.requires_grad for p in parents)
    return Tensor(value, parents if req else (), vjp if req else None,
                  requires_grad=req)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise binary ops --------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.value + b.value

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(g, b.value.shape))

    return _make(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.value - b.value

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(-g, b.value.shape))

    return _make(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = a.value * b.value

    def vjp(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    return _make(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if np.any(b.value == 0.0):
        raise DomainError("division by zero")
    out = a.value / b.value

    def vjp(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.value, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.value / (b.value * b.value),
                                        b.value.shape))

    return _make(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = _lift(a)

    def vjp(g):
        _accumulate(a, -g)

    return _make(-a.value, (a,), vjp)


# -- matrix ops ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    """2-D x 2-D or batched 3-D x 3-D matrix product."""
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    if av.ndim not in (2, 3) or bv.ndim != av.ndim:
        raise DimensionError(f"matmul expects matching 2-D or 3-D operands, "
                             f"got {av.shape} @ {bv.shape}")
    if av.shape[-1] != bv.shape[-2] or (av.ndim == 3 and av.shape[0] != bv.shape[0]):
        raise DimensionError(f"matmul shapes do not conform: {av.shape} @ {bv.shape}")
    out = av @ bv

    def vjp(g):
        if a.requires_grad:
            _accumulate(a, g @ bv.swapaxes(-1, -2))
        if b.requires_grad:
            _accumulate(b, av.swapaxes(-1, -2) @ g)

    return _make(out, (a, b), vjp)


# -- reductions ----------------------------------------------------------

def tensor_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(a, np.broadcast_to(gg, a.value.shape))

    return _make(out, (a,), vjp)


def tensor_mean(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    out = a.value.mean(axis=axis, keepdims=keepdims)
    scale = a.value.size / out.size

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(a, np.broadcast_to(gg, a.value.shape) / scale)

    return _make(out, (a,), vjp)


# -- elementwise unary ops ------------------------------------------------

def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.value)

    def vjp(g):
        _accumulate(a, g * (1.0 - out * out))

    return _make(out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.value))

    def vjp(g):
        _accumulate(a, g * out * (1.0 - out))

    return _make(out, (a,), vjp)


def softplus(a) -> Tensor:
    a = _lift(a)
    out = np.logaddexp(0.0, a.value)

    def vjp(g):
        with np.errstate(over="ignore"):
            s = 1.0 / (1.0 + np.exp(-a.value))
        _accumulate(a, g * s)

    return _make(out, (a,), vjp)


def exp(a) -> Tensor:
    a = _lift(a)
    out = np.exp(a.value)

    def vjp(g):
        _accumulate(a, g * out)

    return _make(out, (a,), vjp)


def log(a) -> Tensor:
    a = _lift(a)
    if np.any(a.value <= 0.0):
        raise DomainError("log of non-positive value")
    out = np.log(a.value)

    def vjp(g):
        _accumulate(a, g / a.value)

    return _make(out, (a,), vjp)


def absolute(a) -> Tensor:
    a = _lift(a)
    out = np.abs(a.value)

    def vjp(g):
        _accumulate(a, g * np.sign(a.value))

    return _make(out, (a,), vjp)


def square(a) -> Tensor:
    a = _lift(a)
    out = a.value * a.value

    def vjp(g):
        _accumulate(a, g * 2.0 * a.value)

    return _make(out, (a,), vjp)


def sqrt(a) -> Tensor:
    a = _lift(a)
    if np.any(a.value < 0.0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.value)

    def vjp(g):
        _accumulate(a, g * 0.5 / out)

    return _make(out, (a,), vjp)


# -- shape ops -------------------------------------------------------------

def concat(tensors, axis=-1) -> Tensor:
    tensors = tuple(_lift(t) for t in tensors)
    out = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _make(out, tensors, vjp)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    out = a.value.reshape(shape)

    def vjp(g):
        _accumulate(a, g.reshape(a.value.shape))

    return _make(out, (a,), vjp)


def transpose(a, axes) -> Tensor:
    a = _lift(a)
    out = a.value.transpose(axes)
    inverse = np.argsort(axes)

    def vjp(g):
        _accumulate(a, g.transpose(inverse))

    return _make(out, (a,), vjp)


def broadcast_to(a, shape) -> Tensor:
    a = _lift(a)
    out = np.broadcast_to(a.value, shape)

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))

    return _make(out, (a,), vjp)


def take(a, idx) -> Tensor:
    """Basic slicing (slices / ints / tuples thereof); fancy indexing is not supported."""
    a = _lift(a)
    if isinstance(idx, (np.ndarray, list)):
        raise ContractError("take supports basic slicing only")
    out = a.value[idx]

    def vjp(g):
        full = np.zeros_like(a.value)
        full[idx] = g
        _accumulate(a, full)

    return _make(out, (a,), vjp)


def stop_gradient(a) -> Tensor:
    a = _lift(a)
    return constant(a.value)


def straight_through(soft: Tensor, hard_value) -> Tensor:
    """Forward the given hard values, pass gradients through to ``soft`` unchanged."""
    hard_value = _as_value(hard_value)
    if hard_value.shape != soft.value.shape:
        raise DimensionError("straight_through requires matching shapes")

    def vjp(g):
        _accumulate(soft, g)

    return _make(hard_value, (soft,), vjp)


# -- backward pass -----------------------------------------------------------

def _topo_order(root: Tensor):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if node in visited:
            continue
        visited.add(node)
        stack.append((node, True))
        for p in node.parents:
            if p not in visited:
                stack.append((p, False))
    return order


def backward(root: Tensor):
    """Accumulate d(root)/d(leaf) into every reachable differentiable leaf."""
    if root.value.shape != ():
        raise ContractError("backward requires a scalar root")
    root.grad = np.ones((), dtype=np.float64)
    for node in reversed(_topo_order(root)):
        if node.vjp is not None and node.grad is not None:
            node.vjp(node.grad)


def zero_grads(params):
    """Reset gradients on a dict or iterable of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None


def grad_check(f, params: dict, h: float = 1e-5) -> float:
    """Max relative error between backward() gradients and central differences.

    ``f`` must be a deterministic scalar function of the parameter tensors
    (rebuild the graph on each call; freeze any randomness beforehand).
    """
    if h <= 0:
        raise ContractError("step size must be positive")
    zero_grads(params)
    out = f()
    if not np.isfinite(out.value):
        raise DomainError("non-finite objective at evaluation point")
    backward(out)
    analytic = {k: (np.zeros_like(p.value) if p.grad is None else p.grad.copy())
                for k, p in params.items()}
    worst = 0.0
    for k, p in params.items():
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().value)
            flat[i] = orig - h
            fm = float(f().value)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise DomainError(f"non-finite objective while probing {k}[{i}]")
            numeric = (fp - fm) / (2.0 * h)
            a = analytic[k].reshape(-1)[i]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
