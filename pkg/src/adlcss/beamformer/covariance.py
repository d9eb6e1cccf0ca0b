"""Mask-weighted frame-wise spatial covariances."""

from __future__ import annotations

import numpy as np

from ..autodiff import ops as T
from ..autodiff.cplx import CTensor, mul, outer_conj

COV_EPS = 1e-8


def _as_ctensor(x):
    if isinstance(x, CTensor):
        return x
    if isinstance(x, np.ndarray) and np.iscomplexobj(x):
        return CTensor.from_numpy(x)
    return None


def mask_power(mask):
    m = _as_ctensor(mask)
    if m is not None:
        return m.abs2()
    return T.square(T.as_tensor(mask))


def masked(Y: CTensor, mask) -> CTensor:
    """``mask * Y`` with a real or complex mask of shape ``Y.shape[:-1]``."""
    m = _as_ctensor(mask)
    if m is not None:
        return mul(CTensor(T.expand_dims(m.re, -1), T.expand_dims(m.im, -1)), Y)
    return Y * T.expand_dims(T.as_tensor(mask), -1)


def framewise_covariances(Y: CTensor, mask, normalization: str = "chunk",
                          eps: float = COV_EPS) -> CTensor:
    """Per-frame ``(M Y)(M Y)^H / (sum_t |M|^2 + eps)``.

    ``Y`` is ``(..., T, C)`` and ``mask`` is ``(..., T)``.  With
    ``normalization="chunk"`` the denominator sums every frame of the input;
    ``"running"`` sums frames up to and including ``t`` (strictly causal).
    Returns ``(..., T, C, C)``.
    """
    S = masked(Y, mask)
    power = mask_power(mask)
    if normalization == "chunk":
        den = T.sum_(power, axis=-1, keepdims=True)
    elif normalization == "running":
        den = T.cumsum(power, axis=-1)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    scale = T.expand_dims(T.expand_dims(1.0 / (den + eps), -1), -1)
    phi = outer_conj(S, S)
    return CTensor(phi.re * scale, phi.im * scale)


def interference_mask(masks, k: int):
    """``M_N + M_S^(1-k)`` from a ``(B, 3, T, F)`` mask stack."""
    return masks[:, 2] + masks[:, 1 - k]
