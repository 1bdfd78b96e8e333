"""Define-by-run reverse-mode differentiation over dense float64 arrays.

Every operation builds a fresh node holding its inputs and a closure that maps
the output gradient to one gradient per input. ``Tensor.backward`` walks the
graph in reverse topological order and accumulates into ``.grad`` of leaf
tensors created with ``requires_grad=True``.
"""
from __future__ import annotations

import numpy as np

from ..errors import NotScalar, ShapeMismatch

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        self.data = np.array(data, dtype=DTYPE) if not isinstance(data, np.ndarray) or data.dtype != DTYPE else data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data.copy()

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        if self.data.size != 1:
            raise NotScalar(f"backward() needs a scalar, got shape {self.shape}")
        order = _topological(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, op=op)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_check(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b):
    """Batched matrix product; a 1-D left operand is treated as a single row."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1 and b.ndim >= 2:
        return reshape(matmul(reshape(a, (1, -1)), b), b.shape[:-2] + b.shape[-1:])
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        return _matmul_rows(a, b)
    if a.ndim == 2 and b.ndim == 3:
        return _matmul_left(a, b)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), backward, "matmul")


def _matmul_rows(a, b):
    # (..., n) @ (n, m) as one 2-D product
    a2 = a.data.reshape(-1, a.shape[-1])
    out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

    def backward(g):
        g2 = g.reshape(-1, b.shape[1])
        ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
        gb = a2.T @ g2 if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward, "matmul")


def _matmul_left(a, b):
    # (t, n) @ (B, n, m) -> (B, t, m) as one 2-D product
    B, n, m = b.shape
    b2 = b.data.transpose(1, 0, 2).reshape(n, B * m)
    out = (a.data @ b2).reshape(a.shape[0], B, m).transpose(1, 0, 2)

    def backward(g):
        g2 = g.transpose(1, 0, 2).reshape(a.shape[0], B * m)
        ga = g2 @ b2.T if a.requires_grad else None
        gb = (a.data.T @ g2).reshape(n, B, m).transpose(1, 0, 2) if b.requires_grad else None
        return ga, gb

    return _make(np.ascontiguousarray(out), (a, b), backward, "matmul")


def relu(a):
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a):
    out = _stable_sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _stable_sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def square(a):
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeMismatch(f"concat: incompatible shapes {ref} and {t.shape} along axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward, "concat")


def sum_(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def getitem(a, key):
    """Indexing with numpy semantics; repeated indices accumulate in backward."""
    out = np.array(a.data[key], dtype=DTYPE)

    basic = all(isinstance(k, (int, slice, type(Ellipsis))) or k is None
                for k in (key if isinstance(key, tuple) else (key,)))

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _make(out, (a,), backward, "getitem")


def transpose(a, axes=None):
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def log_softmax(a):
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def backward(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _make(out, (a,), backward, "log_softmax")


def softmax(a):
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (a,), backward, "softmax")


def cross_entropy(logits, target, reduction="mean"):
    """Negative log-likelihood of integer ``target`` under softmax(logits)."""
    logits = as_tensor(logits)
    target = np.asarray(target, dtype=np.int64)
    if logits.ndim == 1:
        logits = reshape(logits, (1, -1))
        target = target.reshape(1)
    if target.shape != logits.shape[:-1]:
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs target {target.shape}")
    logp = log_softmax(logits)
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, target[..., None], 1.0, axis=-1)
    per = neg(sum_(mul(logp, onehot), axis=-1))
    return _reduce(per, reduction)


def binary_cross_entropy(probs, target, reduction="mean", eps=1e-12):
    """Elementwise BCE on probabilities; ``target`` may be soft labels."""
    probs = as_tensor(probs)
    t = np.asarray(target, dtype=DTYPE)
    if t.shape != probs.shape:
        raise ShapeMismatch(f"binary_cross_entropy: {probs.shape} vs {t.shape}")
    p = np.clip(probs.data, eps, 1.0 - eps)
    out = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))

    def backward(g):
        return (g * (p - t) / (p * (1.0 - p)),)

    return _reduce(_make(out, (probs,), backward, "bce"), reduction)


def bce_with_logits(logits, target, reduction="mean"):
    logits = as_tensor(logits)
    t = np.asarray(target, dtype=DTYPE)
    if t.shape != logits.shape:
        raise ShapeMismatch(f"bce_with_logits: {logits.shape} vs {t.shape}")
    x = logits.data
    out = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    s = _stable_sigmoid(x)
    return _reduce(_make(out, (logits,), lambda g: (g * (s - t),), "bce_logits"), reduction)


def mse(pred, target):
    return mean(square(sub(pred, as_tensor(target))))


def _reduce(t, reduction):
    if reduction == "mean":
        return mean(t)
    if reduction == "sum":
        return sum_(t)
    if reduction == "none":
        return t
    raise ValueError(f"unknown reduction {reduction!r}")
