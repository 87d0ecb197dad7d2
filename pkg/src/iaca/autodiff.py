"""Dense 2-D float64 tensors with reverse-mode automatic differentiation.

Payloads are plain numpy arrays of shape (rows, cols), row-major, float64.
A :class:`Tensor` couples one payload with a zero-initialized gradient
buffer, the tag of the op that produced it, and references to its inputs.
Graphs are acyclic by construction and single-use: build the forward pass
with the op functions below, call ``backward()`` once on a 1x1 output,
read gradients off the leaves, then rebuild for the next pass.

Values are treated as immutable once wrapped; sharing them across threads
is safe. A graph itself belongs to one thread from construction through
backward.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "matmul",
    "add",
    "sub",
    "hadamard",
    "scale",
    "div",
    "transpose",
    "tanh",
    "relu",
    "elementwise",
    "softmax",
    "concat_rows",
    "concat_cols",
    "tile_rows",
    "tile_cols",
    "take_col",
    "sum_all",
    "mean_all",
    "finite_diff",
]

_AXES = {"columns": 0, "rows": 1}


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def _as_value(data) -> np.ndarray:
    v = np.asarray(data, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    if v.ndim != 2:
        raise ShapeError(f"expected a 2-D value, got shape {v.shape}")
    if v.shape[0] < 1 or v.shape[1] < 1:
        raise ShapeError(f"matrix dimensions must be positive, got shape {v.shape}")
    return np.ascontiguousarray(v)


class Tensor:
    """One node of the computation graph.

    ``value`` is the (rows, cols) payload, ``grad`` a same-shaped buffer
    populated by backward(), ``op`` the producing operation's tag, and
    ``parents`` the ordered input nodes.
    """

    __slots__ = ("value", "grad", "op", "parents", "_vjps", "_used")

    def __init__(self, value, op: str = "leaf", parents: tuple = (), vjps: tuple = ()):
        self.value = _as_value(value)
        self.grad = np.zeros_like(self.value)
        self.op = op
        self.parents = tuple(parents)
        self._vjps = tuple(vjps)
        self._used = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 value, got shape {self.value.shape}")
        return float(self.value[0, 0])

    def backward(self) -> None:
        """Reverse-mode accumulation from this node into every reachable grad.

        The seed must be 1x1; its grad is seeded with ones. Each graph may be
        differentiated once, a second call on any overlapping graph raises.
        """
        if self.value.shape != (1, 1):
            raise ValueError(f"backward needs a 1x1 scalar seed, got shape {self.value.shape}")
        order = _topo_order(self)
        if any(node._used for node in order):
            raise RuntimeError("graph already differentiated; rebuild it before calling backward again")
        self.grad = np.ones((1, 1))
        for node in reversed(order):
            g = node.grad
            for parent, vjp in zip(node.parents, node._vjps):
                parent.grad += vjp(g)
            node._used = True

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return hadamard(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, op={self.op!r})"


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order: every node appears after all of its parents."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shapes differ, {a.value.shape} vs {b.value.shape}")


def matmul(a, b) -> Tensor:
    """Standard matrix product (m,k) @ (k,n) -> (m,n)."""
    a, b = _coerce(a), _coerce(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.value.shape} @ {b.value.shape}")
    av, bv = a.value, b.value
    return Tensor(av @ bv, "matmul", (a, b), (lambda g: g @ bv.T, lambda g: av.T @ g))


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _require_same_shape("add", a, b)
    return Tensor(a.value + b.value, "add", (a, b), (lambda g: g, lambda g: g))


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _require_same_shape("sub", a, b)
    return Tensor(a.value - b.value, "sub", (a, b), (lambda g: g, lambda g: -g))


def hadamard(a, b) -> Tensor:
    """Entrywise product of two same-shaped matrices (no broadcasting)."""
    a, b = _coerce(a), _coerce(b)
    _require_same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    return Tensor(av * bv, "hadamard", (a, b), (lambda g: g * bv, lambda g: g * av))


def scale(a, c: float) -> Tensor:
    """Multiply by a compile-time constant (not differentiated through c)."""
    a = _coerce(a)
    c = float(c)
    return Tensor(a.value * c, "scale", (a,), (lambda g: g * c,))


def div(a, b) -> Tensor:
    """Entrywise quotient; caller guarantees a nonzero denominator."""
    a, b = _coerce(a), _coerce(b)
    _require_same_shape("div", a, b)
    av, bv = a.value, b.value
    return Tensor(av / bv, "div", (a, b), (lambda g: g / bv, lambda g: -g * av / (bv * bv)))


def transpose(a) -> Tensor:
    a = _coerce(a)
    return Tensor(a.value.T, "transpose", (a,), (lambda g: g.T,))


def tanh(a) -> Tensor:
    a = _coerce(a)
    y = np.tanh(a.value)
    return Tensor(y, "tanh", (a,), (lambda g: g * (1.0 - y * y),))


def relu(a) -> Tensor:
    """Entrywise max(x, 0); the subgradient at exactly 0 is taken as 0."""
    a = _coerce(a)
    mask = a.value > 0.0
    return Tensor(a.value * mask, "relu", (a,), (lambda g: g * mask,))


def elementwise(a, f: str) -> Tensor:
    """Apply a named entrywise nonlinearity, one of {"tanh", "relu"}."""
    try:
        return {"tanh": tanh, "relu": relu}[f](a)
    except KeyError:
        raise ValueError(f"unknown elementwise function {f!r}; expected 'tanh' or 'relu'") from None


def softmax(a, axis: str = "columns", temperature: float = 1.0) -> Tensor:
    """Temperature softmax along one axis, max-subtracted for stability.

    axis="columns" normalizes every column into a probability vector,
    axis="rows" every row. Logits are divided by the temperature first;
    smaller temperatures sharpen toward the per-slice argmax.
    """
    a = _coerce(a)
    if temperature <= 0:
        raise ValueError(f"softmax temperature must be positive, got {temperature}")
    if axis not in _AXES:
        raise ValueError(f"softmax axis must be 'columns' or 'rows', got {axis!r}")
    ax = _AXES[axis]
    z = a.value / temperature
    z = z - z.max(axis=ax, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=ax, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=ax, keepdims=True)
        return y * (g - inner) / temperature

    return Tensor(y, "softmax", (a,), (vjp,))


def concat_rows(*parts) -> Tensor:
    """Stack matrices vertically; every input must have the same column count."""
    if len(parts) < 2:
        raise ValueError("concat_rows needs at least two inputs")
    ts = [_coerce(p) for p in parts]
    cols = {t.value.shape[1] for t in ts}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ, {[t.value.shape for t in ts]}")
    value = np.concatenate([t.value for t in ts], axis=0)
    vjps = []
    offset = 0
    for t in ts:
        r = t.value.shape[0]
        vjps.append(lambda g, lo=offset, hi=offset + r: g[lo:hi, :])
        offset += r
    return Tensor(value, "concat_rows", tuple(ts), tuple(vjps))


def concat_cols(*parts) -> Tensor:
    """Stack matrices horizontally; every input must have the same row count."""
    if len(parts) < 2:
        raise ValueError("concat_cols needs at least two inputs")
    ts = [_coerce(p) for p in parts]
    rows = {t.value.shape[0] for t in ts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ, {[t.value.shape for t in ts]}")
    value = np.concatenate([t.value for t in ts], axis=1)
    vjps = []
    offset = 0
    for t in ts:
        c = t.value.shape[1]
        vjps.append(lambda g, lo=offset, hi=offset + c: g[:, lo:hi])
        offset += c
    return Tensor(value, "concat_cols", tuple(ts), tuple(vjps))


def tile_rows(a, n: int) -> Tensor:
    """Replicate a 1xL row down to an nxL matrix."""
    a = _coerce(a)
    if a.value.shape[0] != 1:
        raise ShapeError(f"tile_rows needs a 1-row input, got shape {a.value.shape}")
    return Tensor(np.tile(a.value, (n, 1)), "tile_rows", (a,), (lambda g: g.sum(axis=0, keepdims=True),))


def tile_cols(a, n: int) -> Tensor:
    """Replicate an rx1 column across to an rxn matrix."""
    a = _coerce(a)
    if a.value.shape[1] != 1:
        raise ShapeError(f"tile_cols needs a 1-column input, got shape {a.value.shape}")
    return Tensor(np.tile(a.value, (1, n)), "tile_cols", (a,), (lambda g: g.sum(axis=1, keepdims=True),))


def take_col(a, j: int) -> Tensor:
    """Extract column j as an rx1 matrix."""
    a = _coerce(a)
    if not 0 <= j < a.value.shape[1]:
        raise IndexError(f"column {j} out of range for shape {a.value.shape}")

    def vjp(g):
        out = np.zeros_like(a.value)
        out[:, j : j + 1] = g
        return out

    return Tensor(a.value[:, j : j + 1].copy(), "take_col", (a,), (vjp,))


def sum_all(a) -> Tensor:
    """Sum every entry into a 1x1 matrix."""
    a = _coerce(a)
    shape = a.value.shape
    return Tensor([[a.value.sum()]], "sum_all", (a,), (lambda g: np.full(shape, g[0, 0]),))


def mean_all(a) -> Tensor:
    a = _coerce(a)
    return scale(sum_all(a), 1.0 / a.value.size)


def finite_diff(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function, per entry.

    The oracle side of every gradient check: f is re-evaluated from scratch
    at x +/- eps*e_ij, so it must be deterministic and finite near x.
    """
    if eps <= 0:
        raise ValueError(f"finite_diff eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        grad[idx] = (f(xp) - f(xm)) / (2.0 * eps)
    return grad
