"""Central finite-difference oracle for checking analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-6,
                   indices=None) -> np.ndarray:
    """d fn / d param by central differences (only at ``indices`` if given)."""
    grad = np.zeros(param.shape)
    param.data = np.ascontiguousarray(param.data)
    flat = param.data.reshape(-1)
    out_flat = grad.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = float(fn().data)
            flat[i] = orig - h
            down = float(fn().data)
            flat[i] = orig
            out_flat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-6,
                    max_entries: int = None, rng: np.random.Generator = None):
    """Compare backward() against central differences.

    Returns a list of ``(param, indices, analytic, numeric)`` per parameter.
    ``max_entries`` samples that many flat indices per parameter.
    """
    for p in params:
        p.grad = None
    root = fn()
    grads = backward(root)
    results = []
    for p in params:
        analytic = grads.get(p, np.zeros(p.shape)).reshape(-1)
        if max_entries is not None and p.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = np.sort(rng.choice(p.size, size=max_entries, replace=False))
        else:
            idx = np.arange(p.size)
        numeric = numerical_grad(fn, p, h=h, indices=idx).reshape(-1)
        results.append((p, idx, analytic[idx], numeric[idx]))
    return results


def max_relative_error(fn: Callable[[], Tensor], params: Sequence[Tensor], floor: float = 1e-6,
                       **kw) -> float:
    worst = 0.0
    for _, _, a, n in check_gradients(fn, params, **kw):
        if len(a):
            worst = max(worst, float(relative_error(a, n, floor=floor).max()))
    return worst


def fraction_within(fn: Callable[[], Tensor], params: Sequence[Tensor], tol: float,
                    floor: float = 1e-6, **kw) -> tuple:
    """Fraction of parameter tensors whose worst sampled relative error is below ``tol``.

    Returns ``(fraction, {index: worst error})``.
    """
    worst = {}
    for i, (_, _, a, n) in enumerate(check_gradients(fn, params, **kw)):
        worst[i] = float(relative_error(a, n, floor=floor).max()) if len(a) else 0.0
    ok = sum(err < tol for err in worst.values())
    return ok / max(len(worst), 1), worst
