"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Eager execution: every operation records its parents and a vector-Jacobian
closure on the produced node; ``backward`` walks the graph once in reverse
topological order. Gradients accumulate into ``.grad`` across backward
calls until cleared (documented accumulation mode). Elementwise ops follow
numpy broadcasting; gradients are summed back to the operand shapes.

Numerical guards: ``log`` and ``div`` floor their (denominator) argument at
EPS_FLOOR = 1e-12 with zero gradient in the clamped region, and ``abs`` uses
subgradient 0 at exactly 0.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

EPS_FLOOR = 1e-12


class Var:
    """Node in the computation graph holding a float64 array value."""

    __slots__ = ("value", "grad", "parents", "name")

    def __init__(
        self,
        value,
        parents: tuple[tuple["Var", Callable[[np.ndarray], np.ndarray]], ...] = (),
        name: str | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape})"

    # operator sugar; scalars and arrays are lifted to constant nodes
    def __add__(self, other):
        return add(self, lift(other))

    def __radd__(self, other):
        return add(lift(other), self)

    def __sub__(self, other):
        return sub(self, lift(other))

    def __rsub__(self, other):
        return sub(lift(other), self)

    def __mul__(self, other):
        return mul(self, lift(other))

    def __rmul__(self, other):
        return mul(lift(other), self)

    def __truediv__(self, other):
        return div(self, lift(other))

    def __rtruediv__(self, other):
        return div(lift(other), self)

    def __matmul__(self, other):
        return matmul(self, lift(other))

    def __neg__(self):
        return mul(self, lift(-1.0))


def lift(x) -> Var:
    """Wrap a scalar/array as a constant node (no parents)."""
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a: Var, b: Var) -> Var:
    a, b = lift(a), lift(b)
    out = a.value + b.value
    return Var(out, (
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(g, b.value.shape)),
    ))


def sub(a: Var, b: Var) -> Var:
    a, b = lift(a), lift(b)
    out = a.value - b.value
    return Var(out, (
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(-g, b.value.shape)),
    ))


def mul(a: Var, b: Var) -> Var:
    a, b = lift(a), lift(b)
    out = a.value * b.value
    return Var(out, (
        (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
    ))


def div(a: Var, b: Var) -> Var:
    """a / b with the denominator floored at EPS_FLOOR (zero grad when floored)."""
    a, b = lift(a), lift(b)
    denom = np.maximum(b.value, EPS_FLOOR)
    live = b.value > EPS_FLOOR
    out = a.value / denom
    return Var(out, (
        (a, lambda g: _unbroadcast(g / denom, a.value.shape)),
        (b, lambda g: _unbroadcast(np.where(live, -g * a.value / (denom * denom), 0.0),
                                   b.value.shape)),
    ))


def matmul(a: Var, b: Var) -> Var:
    a, b = lift(a), lift(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError("matmul operands must have at least 2 dimensions")
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(f"matmul inner dims {a.value.shape} @ {b.value.shape}")
    out = a.value @ b.value

    def vjp_a(g):
        return _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.value.shape)

    def vjp_b(g):
        return _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.value.shape)

    return Var(out, ((a, vjp_a), (b, vjp_b)))


def exp(x: Var) -> Var:
    x = lift(x)
    out = np.exp(x.value)
    return Var(out, ((x, lambda g: g * out),))


def log(x: Var) -> Var:
    """Natural log with the argument floored at EPS_FLOOR."""
    x = lift(x)
    arg = np.maximum(x.value, EPS_FLOOR)
    live = x.value > EPS_FLOOR
    return Var(np.log(arg), ((x, lambda g: np.where(live, g / arg, 0.0)),))


def absolute(x: Var) -> Var:
    """|x| with subgradient 0 at exactly 0 (np.sign convention)."""
    x = lift(x)
    return Var(np.abs(x.value), ((x, lambda g: g * np.sign(x.value)),))


def square(x: Var) -> Var:
    x = lift(x)
    return Var(x.value * x.value, ((x, lambda g: 2.0 * g * x.value),))


def relu(x: Var) -> Var:
    x = lift(x)
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), ((x, lambda g: g * mask),))


def softplus(x: Var) -> Var:
    """log(1 + exp(x)), overflow-safe; derivative is the logistic sigmoid."""
    x = lift(x)
    out = np.logaddexp(0.0, x.value)
    sig = 1.0 / (1.0 + np.exp(-x.value))
    return Var(out, ((x, lambda g: g * sig),))


def softmax(x: Var) -> Var:
    """Softmax over the last axis, numerically stabilized."""
    x = lift(x)
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * s).sum(axis=-1, keepdims=True)
        return (g - inner) * s

    return Var(s, ((x, vjp),))


def vsum(x: Var, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Var:
    x = lift(x)
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, x.value.shape).copy()
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, x.value.shape).copy()

    return Var(out, ((x, vjp),))


def vmean(x: Var, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Var:
    x = lift(x)
    count = x.value.size if axis is None else np.prod(
        [x.value.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(vsum(x, axis=axis, keepdims=keepdims), lift(1.0 / float(count)))


def concat(xs: Sequence[Var], axis: int = 0) -> Var:
    xs = [lift(x) for x in xs]
    out = np.concatenate([x.value for x in xs], axis=axis)
    offsets = np.cumsum([0] + [x.value.shape[axis] for x in xs])

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return vjp

    return Var(out, tuple((x, make_vjp(i)) for i, x in enumerate(xs)))


def reshape(x: Var, shape: tuple[int, ...]) -> Var:
    x = lift(x)
    return Var(x.value.reshape(shape), ((x, lambda g: g.reshape(x.value.shape)),))


def slice_axis(x: Var, axis: int, start: int, stop: int) -> Var:
    """Contiguous slice [start:stop) along one axis."""
    x = lift(x)
    sl = [slice(None)] * x.value.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def vjp(g):
        full = np.zeros_like(x.value)
        full[sl] = g
        return full

    return Var(x.value[sl], ((x, vjp),))


def transpose(x: Var, axes: tuple[int, ...] | None = None) -> Var:
    x = lift(x)
    if axes is None:
        axes = tuple(range(x.value.ndim))[::-1]
    inverse = tuple(int(np.argsort(axes)[i]) for i in range(len(axes)))
    return Var(np.transpose(x.value, axes), ((x, lambda g: np.transpose(g, inverse)),))


def maximum_scalar(x: Var, floor: float) -> Var:
    """max(x, floor) with zero gradient below the floor."""
    x = lift(x)
    mask = x.value > floor
    return Var(np.where(mask, x.value, floor), ((x, lambda g: g * mask),))


def backward(loss: Var) -> None:
    """Populate ``grad`` on every node reachable from a scalar loss.

    Gradients accumulate into existing ``.grad`` buffers; call
    ``ParamStore.zero_grads`` between steps.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    seed = np.ones_like(loss.value)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = contrib.copy() if contrib.base is not None else contrib
            else:
                parent.grad = parent.grad + contrib
        if node.parents:
            node.grad = None  # free intermediate buffers


def finite_difference(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def gradcheck(
    build: Callable[[Sequence[Var]], Var],
    inputs: Sequence[np.ndarray],
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-8,
) -> float:
    """Compare reverse-mode gradients of ``build(vars)`` against central
    differences for every input array; returns the worst relative error.
    """
    vars_ = [Var(np.array(x, dtype=np.float64)) for x in inputs]
    loss = build(vars_)
    backward(loss)
    worst = 0.0
    for i, v in enumerate(vars_):
        analytic = v.grad if v.grad is not None else np.zeros_like(v.value)

        def f(x, i=i):
            probe = [Var(np.array(inp, dtype=np.float64)) for inp in inputs]
            probe[i] = Var(x.copy())
            return float(build(probe).value)

        numeric = finite_difference(f, v.value.copy(), h=h)
        denom = np.maximum(np.abs(numeric), np.abs(analytic))
        err = np.abs(analytic - numeric) / np.maximum(denom, atol / rtol)
        worst = max(worst, float(err.max()) if err.size else 0.0)
        if not np.allclose(analytic, numeric, rtol=rtol, atol=atol):
            raise AssertionError(
                f"gradient mismatch on input {i}: max rel err {err.max():.3e}"
            )
    return worst
