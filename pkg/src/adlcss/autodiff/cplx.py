"""Complex values as paired real/imaginary tensors.

All operations are compositions of real primitives, so gradients flow
through the ordinary real-valued tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor, as_tensor

EPS = 1e-8


@dataclass(frozen=True)
class CTensor:
    re: Tensor
    im: Tensor

    @classmethod
    def from_numpy(cls, z: np.ndarray) -> "CTensor":
        return cls(Tensor(np.ascontiguousarray(z.real)), Tensor(np.ascontiguousarray(z.imag)))

    @classmethod
    def real(cls, x) -> "CTensor":
        x = as_tensor(x)
        return cls(x, Tensor(np.zeros(x.shape)))

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    @property
    def shape(self) -> tuple:
        return self.re.shape

    @property
    def requires_grad(self) -> bool:
        return self.re.requires_grad or self.im.requires_grad

    def __add__(self, other: "CTensor") -> "CTensor":
        return CTensor(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "CTensor") -> "CTensor":
        return CTensor(self.re - other.re, self.im - other.im)

    def __mul__(self, other) -> "CTensor":
        if isinstance(other, CTensor):
            return mul(self, other)
        return CTensor(self.re * other, self.im * other)

    __rmul__ = __mul__

    def __getitem__(self, index) -> "CTensor":
        return CTensor(self.re[index], self.im[index])

    def conj(self) -> "CTensor":
        return CTensor(self.re, T.neg(self.im))

    def reshape(self, *shape) -> "CTensor":
        return CTensor(self.re.reshape(*shape), self.im.reshape(*shape))

    def transpose(self, *axes) -> "CTensor":
        return CTensor(self.re.transpose(*axes), self.im.transpose(*axes))

    def sum(self, axis=None, keepdims=False) -> "CTensor":
        return CTensor(self.re.sum(axis, keepdims), self.im.sum(axis, keepdims))

    def abs2(self) -> Tensor:
        return T.square(self.re) + T.square(self.im)

    def abs(self, eps: float = EPS) -> Tensor:
        return T.sqrt(self.abs2() + eps)


def mul(a: CTensor, b: CTensor) -> CTensor:
    """``(ar + i ai)(br + i bi)`` with broadcasting."""
    return CTensor(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re)


def mul_conj(a: CTensor, b: CTensor) -> CTensor:
    """``conj(a) * b``."""
    return CTensor(a.re * b.re + a.im * b.im, a.re * b.im - a.im * b.re)


def reciprocal(a: CTensor, eps: float = EPS) -> CTensor:
    """``1 / a`` regularised as ``conj(a) / (|a|^2 + eps)``."""
    den = a.abs2() + eps
    return CTensor(a.re / den, T.neg(a.im) / den)


def matmul(a: CTensor, b: CTensor) -> CTensor:
    return CTensor(T.matmul(a.re, b.re) - T.matmul(a.im, b.im),
                   T.matmul(a.re, b.im) + T.matmul(a.im, b.re))


def outer_conj(a: CTensor, b: CTensor) -> CTensor:
    """``a b^H`` over the last axis: ``(..., C) x (..., C) -> (..., C, C)``."""
    ar, ai = T.expand_dims(a.re, -1), T.expand_dims(a.im, -1)
    br, bi = T.expand_dims(b.re, -2), T.expand_dims(b.im, -2)
    return CTensor(ar * br + ai * bi, ai * br - ar * bi)


def concat(items, axis: int = 0) -> CTensor:
    items = list(items)
    return CTensor(T.concat([c.re for c in items], axis), T.concat([c.im for c in items], axis))


def stack(items, axis: int = 0) -> CTensor:
    items = list(items)
    return CTensor(T.stack([c.re for c in items], axis), T.stack([c.im for c in items], axis))
