"""Chunk-wise MVDR with a power-iteration steering vector."""

from __future__ import annotations

import logging

import numpy as np

from .covariance import COV_EPS

log = logging.getLogger(__name__)


def _herm(a):
    return np.conj(np.swapaxes(a, -1, -2))


def principal_eigenvector(A: np.ndarray, max_iter: int = 200, tol: float = 1e-13,
                          squarings: int = 40):
    """Dominant eigenvector (largest eigenvalue) of Hermitian ``(..., C, C)`` matrices.

    The matrix is shifted by a Gershgorin bound so the top eigenvalue is also
    the largest in magnitude, raised to a high power by repeated squaring,
    then polished by plain power iteration.  Returns ``(v, converged)``;
    non-converged entries fall back to the normalised column with the largest
    diagonal element.
    """
    A = np.asarray(A, dtype=np.complex128)
    c = A.shape[-1]
    eye = np.eye(c)
    shift = np.abs(A).sum(axis=-1).max(axis=-1)[..., None, None]
    B = A + shift * eye
    scale = np.maximum(np.real(np.trace(B, axis1=-2, axis2=-1)), 1e-300)[..., None, None]
    P = B / scale
    for _ in range(squarings):
        P = P @ P
        tr = np.real(np.trace(P, axis1=-2, axis2=-1))[..., None, None]
        P = P / np.maximum(tr, 1e-300)
    col = np.argmax(np.linalg.norm(P, axis=-2), axis=-1)
    x = np.take_along_axis(P, col[..., None, None], axis=-1)[..., 0]
    x = x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-300)
    Bn = B / scale
    for _ in range(max_iter):
        y = (Bn @ x[..., None])[..., 0]
        y = y / np.maximum(np.linalg.norm(y, axis=-1, keepdims=True), 1e-300)
        change = 1.0 - np.abs(np.sum(np.conj(y) * x, axis=-1))
        x = y
        if np.all(change < tol):
            break
    lam = np.real(np.sum(np.conj(x) * (A @ x[..., None])[..., 0], axis=-1))
    resid = np.linalg.norm((A @ x[..., None])[..., 0] - lam[..., None] * x, axis=-1)
    norm = np.maximum(np.linalg.norm(A, axis=(-2, -1)), 1e-300)
    converged = ((resid <= 1e-8 * norm) & np.all(np.isfinite(x), axis=-1)
                 & (np.linalg.norm(x, axis=-1) > 0.5))
    if not np.all(converged):
        log.warning("power iteration did not converge for %d of %d matrices; "
                    "using largest-diagonal columns", int((~converged).sum()), converged.size)
        diag = np.argmax(np.real(np.diagonal(A, axis1=-2, axis2=-1)), axis=-1)
        fb = np.take_along_axis(A, diag[..., None, None], axis=-1)[..., 0]
        n = np.linalg.norm(fb, axis=-1, keepdims=True)
        unit = np.eye(c)[diag]
        fb = np.where(n > 0, fb / np.where(n > 0, n, 1.0), unit)
        x = np.where(converged[..., None], x, fb)
    return x, converged


def relative_transfer(v: np.ndarray, ref: int = 0) -> np.ndarray:
    """Scale ``v`` so its ``ref`` entry is 1 (falls back to unit norm when that entry vanishes)."""
    r = v[..., ref:ref + 1]
    ok = np.abs(r) > 1e-8
    return np.where(ok, v / np.where(ok, r, 1.0), v)


def mvdr_weights(phi_vv: np.ndarray, v: np.ndarray, loading: float = 1e-6) -> np.ndarray:
    """``h = Phi^-1 v / (v^H Phi^-1 v)`` with diagonal loading ``loading * trace / C``."""
    c = phi_vv.shape[-1]
    tr = np.real(np.trace(phi_vv, axis1=-2, axis2=-1))[..., None, None]
    delta = loading * tr / c + 1e-20
    num = np.linalg.solve(phi_vv + delta * np.eye(c), v[..., None])[..., 0]
    den = np.sum(np.conj(v) * num, axis=-1, keepdims=True)
    ok = np.abs(den) > 1e-300
    # degenerate (zero steering) frames fall back to the channel-0 selector
    return np.where(ok, num / np.where(ok, den, 1.0), np.eye(c)[0])


def chunk_covariances(Y: np.ndarray, mask: np.ndarray, eps: float = COV_EPS) -> np.ndarray:
    """Mask-weighted average covariance per frequency: ``(B, C, T, F)`` -> ``(B, F, C, C)``."""
    S = mask[:, None] * Y
    num = np.einsum("bctf,bdtf->bfcd", S, np.conj(S))
    den = np.sum(np.abs(mask) ** 2, axis=1)[..., None, None]
    return num / (den + eps)


def classical_mvdr(Y: np.ndarray, masks: np.ndarray, loading: float = 1e-6):
    """Chunk-constant MVDR per speaker.

    ``Y`` is ``(B, C, T, F)``, ``masks`` ``(B, 3, T, F)``.  Returns
    ``(outputs (B, 2, T, F), weights (B, 2, F, C), steering (B, 2, F, C))``.
    """
    outs, ws, vs = [], [], []
    for k in range(2):
        phi_ss = chunk_covariances(Y, masks[:, k])
        phi_vv = chunk_covariances(Y, masks[:, 2] + masks[:, 1 - k])
        v, _ = principal_eigenvector(phi_ss)
        v = relative_transfer(v)
        h = mvdr_weights(phi_vv, v, loading)
        outs.append(np.einsum("bfc,bctf->btf", np.conj(h), Y))
        ws.append(h)
        vs.append(v)
    return np.stack(outs, 1), np.stack(ws, 1), np.stack(vs, 1)
