"""Scale-invariant SDR and plain SNR in dB."""

from __future__ import annotations

import itertools

import numpy as np

CLAMP_DB = 60.0


def _check(estimate, reference):
    est = np.asarray(estimate, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.size} vs {ref.size}")
    if not np.any(ref):
        raise ValueError("reference signal is all zeros")
    return est, ref


def _db(num, den):
    if den <= 0:
        return CLAMP_DB
    if num <= 0:
        return -CLAMP_DB
    return float(np.clip(10 * np.log10(num / den), -CLAMP_DB, CLAMP_DB))


def si_sdr(estimate, reference) -> float:
    est, ref = _check(estimate, reference)
    alpha = np.dot(est, ref) / np.dot(ref, ref)
    target = alpha * ref
    return _db(np.dot(target, target), np.sum((target - est) ** 2))


def snr(estimate, reference) -> float:
    est, ref = _check(estimate, reference)
    return _db(np.dot(ref, ref), np.sum((ref - est) ** 2))


def best_assignment(estimates, references, metric=si_sdr):
    """Mean metric over active references under the best stream assignment.

    Silent references are skipped.  Returns ``(mean score, perm, per-reference scores)``.
    """
    active = [i for i, r in enumerate(references) if np.any(r)]
    best = None
    for perm in itertools.permutations(range(len(estimates)), len(references)):
        scores = [metric(estimates[perm[i]], references[i]) for i in active]
        mean = float(np.mean(scores))
        if best is None or mean > best[0]:
            best = (mean, perm, scores)
    return best
