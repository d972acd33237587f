"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every value in this package -- images, activations, parameters, losses -- is a
`Tensor`: a contiguous row-major float64 array plus an optional gradient slot.
Operations on tensors that require gradients record a `TapeNode` on their
output; the recorded nodes form an implicit tape whose topological order is
recovered by `graph_nodes`. `Tensor.backward` replays that tape once, in
reverse, accumulating gradients into every reachable tensor that requires
them. Repeated backward calls without `zero_grad` accumulate.

Tensors are immutable after creation except for the grad slot, so forward
evaluation is pure; a graph and its tensors belong to one logical thread and
backward is single-threaded per graph. Summation follows numpy's fixed
reduction order, so forward results are bitwise reproducible for identical
inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import BroadcastError, ContractError, DomainError, ShapeError

__all__ = [
    "Tensor",
    "TapeNode",
    "graph_nodes",
    "elementwise",
    "reduce",
    "concat",
    "matmul",
    "grad_check",
]


class TapeNode:
    """One recorded operation: which tensors fed it and how to push gradients back."""

    __slots__ = ("op", "inputs", "grad_fn")

    def __init__(self, op, inputs, grad_fn):
        self.op = op
        self.inputs = inputs
        self.grad_fn = grad_fn  # out_grad -> tuple of arrays aligned with inputs

    def __repr__(self):
        return f"TapeNode({self.op}, {len(self.inputs)} inputs)"


def _broadcast_shape(a, b):
    """Resolve trailing-dimension broadcasting, or raise BroadcastError."""
    out = []
    for da, db in zip(reversed(a), reversed(b)):
        if da == db or db == 1:
            out.append(da)
        elif da == 1:
            out.append(db)
        else:
            raise BroadcastError(f"cannot broadcast shapes {a} and {b}")
    longer = a if len(a) >= len(b) else b
    out.extend(reversed(longer[: abs(len(a) - len(b))]))
    return tuple(reversed(out))


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the operand's original shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64, order="C")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None

    # --- basics -----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{rg})"

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """A view of the same data cut out of the autodiff graph."""
        return Tensor(self.data)

    @staticmethod
    def _coerce(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    def _make(self, data, op, inputs, grad_fn):
        out = Tensor(data)
        if any(t.requires_grad for t in inputs):
            out.requires_grad = True
            out.node = TapeNode(op, inputs, grad_fn)
        return out

    # --- binary elementwise -----------------------------------------------

    def __add__(self, other):
        other = Tensor._coerce(other)
        _broadcast_shape(self.shape, other.shape)
        data = self.data + other.data

        def grad_fn(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return self._make(data, "add", (self, other), grad_fn)

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._coerce(other)
        _broadcast_shape(self.shape, other.shape)
        data = self.data - other.data

        def grad_fn(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)

        return self._make(data, "sub", (self, other), grad_fn)

    def __rsub__(self, other):
        return Tensor._coerce(other) - self

    def __mul__(self, other):
        other = Tensor._coerce(other)
        _broadcast_shape(self.shape, other.shape)
        data = self.data * other.data
        a, b = self, other

        def grad_fn(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return self._make(data, "mul", (self, other), grad_fn)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        _broadcast_shape(self.shape, other.shape)
        data = self.data / other.data
        a, b = self, other

        def grad_fn(g):
            ga = _unbroadcast(g / b.data, a.shape)
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            return ga, gb

        return self._make(data, "div", (self, other), grad_fn)

    def __rtruediv__(self, other):
        return Tensor._coerce(other) / self

    def __neg__(self):
        def grad_fn(g):
            return (-g,)

        return self._make(-self.data, "negate", (self,), grad_fn)

    # --- unary elementwise --------------------------------------------------

    def log(self):
        if np.any(self.data <= 0.0):
            bad = float(self.data[self.data <= 0.0].flat[0])
            raise DomainError(f"log requires strictly positive inputs, got {bad}")
        data = np.log(self.data)

        def grad_fn(g):
            return (g / self.data,)

        return self._make(data, "log", (self,), grad_fn)

    def sqrt(self):
        if np.any(self.data < 0.0):
            raise DomainError("sqrt requires non-negative inputs")
        data = np.sqrt(self.data)

        def grad_fn(g):
            return (g * (0.5 / data),)

        return self._make(data, "sqrt", (self,), grad_fn)

    def sigmoid(self):
        # exp(-|x|) keeps the evaluation finite for large |x|
        e = np.exp(-np.abs(self.data))
        data = np.where(self.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

        def grad_fn(g):
            return (g * data * (1.0 - data),)

        return self._make(data, "sigmoid", (self,), grad_fn)

    def tanh(self):
        data = np.tanh(self.data)

        def grad_fn(g):
            return (g * (1.0 - data * data),)

        return self._make(data, "tanh", (self,), grad_fn)

    def relu(self):
        data = np.where(self.data > 0, self.data, 0.0)

        def grad_fn(g):
            return (g * (self.data > 0),)

        return self._make(data, "relu", (self,), grad_fn)

    def leaky_relu(self, slope=0.2):
        data = np.where(self.data > 0, self.data, slope * self.data)

        def grad_fn(g):
            return (g * np.where(self.data > 0, 1.0, slope),)

        return self._make(data, "leaky_relu", (self,), grad_fn)

    def clamp(self, lo, hi):
        """Clip values into [lo, hi]; gradient passes only in the open interior."""
        data = np.clip(self.data, lo, hi)

        def grad_fn(g):
            return (g * ((self.data > lo) & (self.data < hi)),)

        return self._make(data, "clamp", (self,), grad_fn)

    # --- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        if int(np.prod(shape, dtype=np.int64)) != self.data.size:
            raise ShapeError(f"cannot reshape {self.shape} to {shape}")
        data = self.data.reshape(shape)

        def grad_fn(g):
            return (g.reshape(self.shape),)

        return self._make(data, "reshape", (self,), grad_fn)

    def __getitem__(self, idx):
        data = self.data[idx]

        def grad_fn(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            return (full,)

        return self._make(np.asarray(data, order="C"), "slice", (self,), grad_fn)

    # --- reductions -----------------------------------------------------------

    @staticmethod
    def _norm_axes(axes, ndim):
        if axes is None:
            return None
        axes = tuple(axes) if isinstance(axes, (tuple, list)) else (axes,)
        if len(axes) == 0:
            return None  # empty list reduces the whole tensor
        out = []
        for a in axes:
            if not -ndim <= a < ndim:
                raise ShapeError(f"axis {a} out of range for {ndim}-d tensor")
            out.append(a % ndim)
        return tuple(sorted(set(out)))

    def sum(self, axes=None, keepdims=False):
        axes = Tensor._norm_axes(axes, self.data.ndim)
        data = self.data.sum(axis=axes, keepdims=keepdims)

        def grad_fn(g):
            if not keepdims:
                shape = list(self.shape)
                for a in axes if axes is not None else range(len(shape)):
                    shape[a] = 1
                g = g.reshape(shape)
            return (np.broadcast_to(g, self.shape).copy(),)

        return self._make(data, "sum", (self,), grad_fn)

    def mean(self, axes=None, keepdims=False):
        norm = Tensor._norm_axes(axes, self.data.ndim)
        if norm is None:
            count = self.data.size
        else:
            count = int(np.prod([self.shape[a] for a in norm]))
        return self.sum(axes, keepdims) * (1.0 / count)

    # --- backward -----------------------------------------------------------

    def backward(self):
        """Populate .grad on every requires_grad tensor reachable from this scalar.

        Gradients accumulate across calls; zero_grad resets a tensor's slot.
        """
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward on a tensor that does not require grad")
        order = graph_nodes(self)
        messages = {id(self): np.ones_like(self.data)}
        for t in reversed(order):
            g = messages.pop(id(t), None)
            if g is None:
                continue
            # messages are never mutated in place, so adopting one is safe
            if t.grad is None:
                t.grad = g
            else:
                t.grad = t.grad + g
            if t.node is None:
                continue
            input_grads = t.node.grad_fn(g)
            for inp, gi in zip(t.node.inputs, input_grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in messages:
                    messages[key] = messages[key] + gi
                else:
                    messages[key] = gi


def graph_nodes(root):
    """Tensors of the recorded tape reachable from root, inputs before consumers."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for inp in t.node.inputs:
                if inp.requires_grad and id(inp) not in visited:
                    stack.append((inp, False))
    return order


# --- module-level operation surface ------------------------------------------

_UNARY = {
    "log": Tensor.log,
    "negate": Tensor.__neg__,
    "sigmoid": Tensor.sigmoid,
    "relu": Tensor.relu,
    "tanh": Tensor.tanh,
    "sqrt": Tensor.sqrt,
}

_BINARY = {
    "add": Tensor.__add__,
    "sub": Tensor.__sub__,
    "mul": Tensor.__mul__,
    "div": Tensor.__truediv__,
}


def elementwise(op_kind, a, b=None, slope=0.2):
    """Dispatch an elementwise operation by name.

    Binary kinds need identical shapes or trailing-dimension broadcast
    compatibility; log needs strictly positive inputs.
    """
    if op_kind == "leaky_relu":
        return a.leaky_relu(slope)
    if op_kind in _UNARY:
        if b is not None:
            raise ContractError(f"{op_kind} is unary")
        return _UNARY[op_kind](a)
    if op_kind in _BINARY:
        if b is None:
            raise ContractError(f"{op_kind} needs two operands")
        return _BINARY[op_kind](a, b)
    raise ContractError(f"unknown elementwise op {op_kind!r}")


def reduce(op_kind, t, axes=None, keepdims=False):
    """Dispatch a reduction by name; an empty axis list reduces everything."""
    if op_kind == "sum":
        return t.sum(axes, keepdims)
    if op_kind == "mean":
        return t.mean(axes, keepdims)
    raise ContractError(f"unknown reduce op {op_kind!r}")


def matmul(a, b):
    """2-d matrix product with gradients for both operands."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return a._make(data, "matmul", (a, b), grad_fn)


Tensor.__matmul__ = matmul


def concat(tensors, axis):
    """Join tensors along one axis; backward routes gradient slices to each input.

    Slicing the output at the original offsets recovers every input bit-exactly.
    """
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    first = tensors[0].shape
    ndim = len(first)
    if not -ndim <= axis < ndim:
        raise ShapeError(f"concat axis {axis} out of range for {ndim}-d tensors")
    axis = axis % ndim
    for t in tensors[1:]:
        if len(t.shape) != ndim:
            raise ShapeError(f"concat rank mismatch: {first} vs {t.shape}")
        for d in range(ndim):
            if d != axis and t.shape[d] != first[d]:
                raise ShapeError(f"concat non-axis dimension mismatch: {first} vs {t.shape}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        pieces = []
        for i in range(len(tensors)):
            sl = [slice(None)] * ndim
            sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            pieces.append(np.ascontiguousarray(g[tuple(sl)]))
        return tuple(pieces)

    out = Tensor(data)
    if any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out.node = TapeNode("concat", tuple(tensors), grad_fn)
    return out


def grad_check(fn, input, epsilon=1e-5):
    """Max relative error between reverse-mode and central-difference gradients.

    fn must be deterministic and produce a scalar tensor. The error at each
    coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    base = np.array(input.data, dtype=np.float64)
    probe = Tensor(base.copy(), requires_grad=True)
    out = fn(probe)
    if out.data.size != 1:
        raise ContractError(f"grad_check needs a scalar-valued fn, got shape {out.shape}")
    out.backward()
    analytic = np.zeros_like(base) if probe.grad is None else probe.grad.reshape(base.shape)

    worst = 0.0
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = fn(Tensor(base.copy())).item()
        flat[i] = orig - epsilon
        lo = fn(Tensor(base.copy())).item()
        flat[i] = orig
        numeric = (hi - lo) / (2.0 * epsilon)
        a = float(analytic.reshape(-1)[i])
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, err)
    return worst
