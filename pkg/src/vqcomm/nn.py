"""Parameters, layers, and initializers built on the autodiff core."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Parameter(Tensor):
    """Trainable tensor with a name for checkpointing."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


class Module:
    """Bag of parameters with recursive collection."""

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for value in vars(self).values():
            out.extend(_collect(value))
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _collect(value) -> list[Parameter]:
    if isinstance(value, Parameter):
        return [value]
    if isinstance(value, Module):
        return value.parameters()
    if isinstance(value, (list, tuple)):
        out = []
        for v in value:
            out.extend(_collect(v))
        return out
    return []


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True, name: str = "linear"):
        self.weight = Parameter(glorot(rng, d_in, d_out), name=f"{name}.weight")
        self.bias = Parameter(np.zeros(d_out), name=f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.weight)
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return out


class MLP(Module):
    """Stack of Linear layers with ReLU between (none after the last)."""

    def __init__(self, rng: np.random.Generator, dims: list[int], name: str = "mlp"):
        self.layers = [
            Linear(rng, dims[i], dims[i + 1], name=f"{name}.{i}") for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return x


def _gru_gates(gx: Tensor, gh: Tensor, h: Tensor) -> Tensor:
    xr, xz, xn = ad.split(gx, 3, axis=-1)
    hr, hz, hn = ad.split(gh, 3, axis=-1)
    r = ad.sigmoid(ad.add(xr, hr))
    z = ad.sigmoid(ad.add(xz, hz))
    n = ad.tanh(ad.add(xn, ad.mul(r, hn)))
    one_minus_z = ad.add(ad.scale(z, -1.0), 1.0)
    return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))


class GRUCell(Module):
    """Standard gated recurrent unit (reset/update gates, candidate state)."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_hidden: int, name: str = "gru"):
        self.w_x = Parameter(glorot(rng, d_in, 3 * d_hidden), name=f"{name}.w_x")
        self.w_h = Parameter(glorot(rng, d_hidden, 3 * d_hidden), name=f"{name}.w_h")
        self.b_x = Parameter(np.zeros(3 * d_hidden), name=f"{name}.b_x")
        self.b_h = Parameter(np.zeros(3 * d_hidden), name=f"{name}.b_h")

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        gx = ad.add(ad.matmul(x, self.w_x), self.b_x)
        gh = ad.add(ad.matmul(h, self.w_h), self.b_h)
        return _gru_gates(gx, gh, h)


class StackedGRU(Module):
    """M independent GRU cells evaluated in one batched pass.

    Weight slice ``[i]`` is module i's cell; no parameters are shared.
    """

    def __init__(self, rng: np.random.Generator, modules: int, d_in: int, d_hidden: int, name: str = "gru"):
        self.modules = modules
        self.w_x = Parameter(
            np.stack([glorot(rng, d_in, 3 * d_hidden) for _ in range(modules)]), name=f"{name}.w_x"
        )
        self.w_h = Parameter(
            np.stack([glorot(rng, d_hidden, 3 * d_hidden) for _ in range(modules)]), name=f"{name}.w_h"
        )
        self.b_x = Parameter(np.zeros((modules, 1, 3 * d_hidden)), name=f"{name}.b_x")
        self.b_h = Parameter(np.zeros((modules, 1, 3 * d_hidden)), name=f"{name}.b_h")

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        """h: (M, B, H); x: (B, d_in) shared by all modules -> (M, B, H)."""
        gx = ad.add(ad.matmul(x, self.w_x), self.b_x)
        gh = ad.add(ad.matmul(h, self.w_h), self.b_h)
        return _gru_gates(gx, gh, h)
