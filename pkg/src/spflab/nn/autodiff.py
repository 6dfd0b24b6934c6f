"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation returns a Tensor wired to its inputs with a closure that
propagates the output gradient; the op graph doubles as the tape.  backward()
walks the graph in reverse topological order from a scalar loss.  Tensors
that do not require gradients carry no graph, so inference through frozen
(target) parameters allocates nothing.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Reduce a broadcast gradient back to the operand's shape.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents) if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; every overload routes through the op functions below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=back)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=back)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data / b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / (b.data**2), b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=back)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data @ b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return Tensor(out_data, _parents=(a, b), _backward=back)


def power(a, exponent: float) -> Tensor:
    a = _as_tensor(a)
    exponent = float(exponent)
    out_data = a.data**exponent

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return Tensor(out_data, _parents=(a,), _backward=back)


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * out_data)

    return Tensor(out_data, _parents=(a,), _backward=back)


def log(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.log(a.data)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g / a.data)

    return Tensor(out_data, _parents=(a,), _backward=back)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0.0)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * mask)

    return Tensor(out_data, _parents=(a,), _backward=back)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, _parents=(a,), _backward=back)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - out_data**2))

    return Tensor(out_data, _parents=(a,), _backward=back)


def swish(a) -> Tensor:
    """x * sigmoid(x)."""
    a = _as_tensor(a)
    sig = 1.0 / (1.0 + np.exp(-a.data))
    out_data = a.data * sig

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * (sig + a.data * sig * (1.0 - sig)))

    return Tensor(out_data, _parents=(a,), _backward=back)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if a.requires_grad:
            grad = np.asarray(g)
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            _accumulate(a, np.broadcast_to(grad, a.data.shape).copy())

    return Tensor(out_data, _parents=(a,), _backward=back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    widths = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def back(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(start, stop)
                _accumulate(t, g[tuple(index)])

    return Tensor(out_data, _parents=tuple(tensors), _backward=back)


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    out_data = a.data[:, start:stop]

    def back(g):
        if a.requires_grad:
            grad = np.zeros_like(a.data)
            grad[:, start:stop] = g
            _accumulate(a, grad)

    return Tensor(out_data, _parents=(a,), _backward=back)


def detach(a: Tensor) -> Tensor:
    """Cut the graph: same data, no gradient flow."""
    return Tensor(a.data)


_DENSE_ACTS = {
    "identity": (lambda z: z, lambda z, y: 1.0),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, y: (z > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda z, y: 1.0 - y**2),
    "swish": (
        lambda z: z / (1.0 + np.exp(-z)),
        lambda z, y: (lambda s: s + z * s * (1.0 - s))(1.0 / (1.0 + np.exp(-z))),
    ),
}


def dense(x, w, b, activation: str = "identity") -> Tensor:
    """Fused act(x @ w + b); one graph node instead of three."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    fwd, deriv = _DENSE_ACTS[activation]
    z = x.data @ w.data
    z += b.data
    out_data = fwd(z)

    def back(g):
        gz = g * deriv(z, out_data) if activation != "identity" else g
        if x.requires_grad:
            _accumulate(x, gz @ w.data.T)
        if w.requires_grad:
            _accumulate(w, x.data.T @ gz)
        if b.requires_grad:
            _accumulate(b, gz.sum(axis=0))

    return Tensor(out_data, _parents=(x, w, b), _backward=back)


def layer_norm(x, gain, shift, eps: float = 1e-5) -> Tensor:
    """Row-wise normalisation with learned gain and shift; fused node."""
    x, gain, shift = _as_tensor(x), _as_tensor(gain), _as_tensor(shift)
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    sigma = np.sqrt((centered**2).mean(axis=1, keepdims=True) + eps)
    xhat = centered / sigma
    out_data = xhat * gain.data + shift.data

    def back(g):
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).sum(axis=0))
        if shift.requires_grad:
            _accumulate(shift, g.sum(axis=0))
        if x.requires_grad:
            gh = g * gain.data
            term = gh - gh.mean(axis=1, keepdims=True) - xhat * (gh * xhat).mean(
                axis=1, keepdims=True
            )
            _accumulate(x, term / sigma)

    return Tensor(out_data, _parents=(x, gain, shift), _backward=back)


def backward(loss: Tensor, params: "ParamTree | None" = None) -> None:
    """Populate .grad on everything the scalar loss depends on.

    Parameters not reachable from the loss keep zero gradients when a
    ParamTree is supplied (documented behaviour, not an error).
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if params is not None:
        for p in params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


class ParamTree(dict):
    """Named map from path strings (e.g. "encoder_s/layer0/weight") to Tensors."""

    def subtree(self, prefix: str) -> "ParamTree":
        return ParamTree({k: v for k, v in self.items() if k.startswith(prefix)})

    def copy_values(self, requires_grad: bool = False) -> "ParamTree":
        """Deep copy of the data; fresh graph-free tensors (e.g. target copies)."""
        return ParamTree(
            {k: Tensor(v.data.copy(), requires_grad=requires_grad) for k, v in self.items()}
        )

    def names(self) -> list[str]:
        return sorted(self)

    def same_structure(self, other: "ParamTree") -> bool:
        if self.keys() != other.keys():
            return False
        return all(self[k].data.shape == other[k].data.shape for k in self)


def zero_grad(params: ParamTree) -> None:
    for p in params.values():
        p.grad = None
