"""Permutation-invariant spectral losses."""

from __future__ import annotations

import numpy as np

from ..autodiff import ops as T
from ..autodiff.cplx import CTensor
from ..autodiff.tensor import Tensor
from ..signal.mel import MelFilterbank, log_mel

LOSSES = ("magnitude", "log-mel")


def magnitude(x) -> Tensor:
    if isinstance(x, CTensor):
        return x.abs(1e-12)
    if isinstance(x, np.ndarray) and np.iscomplexobj(x):
        return Tensor(np.abs(x))
    return T.as_tensor(x)


def pair_loss(est: Tensor, ref: Tensor, kind: str, bank: MelFilterbank = None) -> Tensor:
    """Mean squared error over everything but the leading batch axis -> ``(B,)``."""
    if kind == "magnitude":
        d = est - ref
    elif kind == "log-mel":
        if bank is None:
            raise ValueError("log-mel loss needs a filterbank")
        d = log_mel(est, bank) - log_mel(ref, bank)
    else:
        raise ValueError(f"unknown loss {kind!r}; choose from {LOSSES}")
    axes = tuple(range(1, d.ndim))
    return T.mean(d * d, axis=axes)


def pit_loss(estimates, references, kind: str = "magnitude", bank: MelFilterbank = None,
             return_choice: bool = False):
    """Minimum over the two output orders of the mean per-source loss, averaged over the batch.

    ``estimates``/``references``: sequences of two ``(B, T, F)`` spectra
    (complex or magnitude).  Differentiable in ``estimates``.
    """
    if len(estimates) != 2 or len(references) != 2:
        raise ValueError("pit_loss handles exactly two sources")
    e = [magnitude(x) for x in estimates]
    r = [magnitude(x) for x in references]
    if e[0].ndim == 2:
        e = [T.expand_dims(x, 0) for x in e]
        r = [T.expand_dims(x, 0) for x in r]
    ident = 0.5 * (pair_loss(e[0], r[0], kind, bank) + pair_loss(e[1], r[1], kind, bank))
    swap = 0.5 * (pair_loss(e[0], r[1], kind, bank) + pair_loss(e[1], r[0], kind, bank))
    loss = T.mean(T.minimum(ident, swap))
    if return_choice:
        return loss, (swap.data < ident.data)
    return loss
