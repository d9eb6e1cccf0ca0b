"""Parameter containers and the small layer set used by the networks."""

from __future__ import annotations

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> Parameter:
    a = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-a, a, size=shape))


def zeros(shape) -> Parameter:
    return Parameter(np.zeros(shape))


class Module:
    """Attribute-walking parameter registry (Parameters, Modules, lists)."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, value in vars(self).items():
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        return {prefix + n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str = "") -> None:
        for n, p in self.named_parameters():
            key = prefix + n
            if key not in state:
                raise KeyError(f"missing parameter {key!r} in checkpoint")
            arr = np.asarray(state[key], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError("load_state_dict", arr.shape, p.shape, detail=key)
            p.data = arr.copy()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _walk(value, name):
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.w = uniform_init(rng, d_in, (d_in, d_out))
        self.b = zeros((d_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.w.shape[0]:
            raise ShapeError("linear", x.shape, self.w.shape)
        y = T.matmul(x, self.w) if x.ndim >= 2 else T.matmul(T.expand_dims(x, 0), self.w)[0]
        return y + self.b if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, d: int):
        self.g = Parameter(np.ones(d))
        self.b = zeros((d,))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.g, self.b)


class GRU(Module):
    """Unidirectional GRU layer over ``(lanes, T, I)`` inputs."""

    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.w_ih = uniform_init(rng, d_in, (d_in, 3 * hidden))
        self.w_hh = uniform_init(rng, hidden, (hidden, 3 * hidden))
        self.b_ih = zeros((3 * hidden,))
        self.b_hh = zeros((3 * hidden,))
        self.hidden = hidden

    def __call__(self, x: Tensor, h0: Optional[Tensor] = None) -> Tensor:
        if h0 is None:
            h0 = Tensor(np.zeros((x.shape[0], self.hidden)))
        return T.gru_sequence(x, h0, self.w_ih, self.w_hh, self.b_ih, self.b_hh)

    def cell(self, x: Tensor, h: Tensor) -> Tensor:
        return gru_cell(x, h, self.w_ih, self.w_hh, self.b_ih, self.b_hh)


def gru_cell(x: Tensor, h: Tensor, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """One GRU step built from elementary primitives (same gates as ``gru_sequence``)."""
    hidden = w_hh.shape[0]
    if x.shape[-1] != w_ih.shape[0] or h.shape[-1] != hidden:
        raise ShapeError("gru_cell", x.shape, h.shape, w_ih.shape, w_hh.shape)
    gi = T.matmul(x, w_ih) + b_ih
    gh = T.matmul(h, w_hh) + b_hh
    i_r, i_z, i_n = T.split(gi, [hidden] * 3, axis=-1)
    h_r, h_z, h_n = T.split(gh, [hidden] * 3, axis=-1)
    r = T.sigmoid(i_r + h_r)
    z = T.sigmoid(i_z + h_z)
    n = T.tanh(i_n + r * h_n)
    return (1.0 - z) * n + z * h


def swish(x: Tensor) -> Tensor:
    return x * T.sigmoid(x)
