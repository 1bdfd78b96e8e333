"""Parameter containers: ``Module``, ``Linear`` and ``MLP``."""
from __future__ import annotations

import numpy as np

from .core import Tensor, matmul, relu


def uniform_init(rng, fan_in, shape):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Parameters are discovered from attributes, in assignment order."""

    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{full}.{i}."))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = value.copy()


class Linear(Module):
    def __init__(self, n_in, n_out, rng, zero=False):
        w = np.zeros((n_in, n_out)) if zero else uniform_init(rng, n_in, (n_in, n_out))
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return matmul(x, self.weight) + self.bias


class MLP(Module):
    """Stack of Linear layers with ReLU between them.

    ``final_relu`` also rectifies the last layer; ``zero_last`` starts the last
    layer at zero so the initial output equals its (zero) bias.
    """

    def __init__(self, sizes, rng, final_relu=False, zero_last=False):
        self.layers = [
            Linear(a, b, rng, zero=zero_last and i == len(sizes) - 2)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        self.final_relu = final_relu

    def __call__(self, x, return_hidden=False):
        last = len(self.layers) - 1
        penultimate = x
        for i, layer in enumerate(self.layers):
            if i == last:
                penultimate = x
            x = layer(x)
            if i < last or self.final_relu:
                x = relu(x)
        return (x, penultimate) if return_hidden else x
