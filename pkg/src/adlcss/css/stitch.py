"""Cross-chunk output permutation alignment for two streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

IDENTITY = (0, 1)
SWAP = (1, 0)


def compose(base, step):
    """Index map ``j -> base[step[j]]``."""
    return tuple(base[i] for i in step)


@dataclass
class StitchState:
    permutation: tuple = IDENTITY
    decisions: List[tuple] = field(default_factory=list)      # per-chunk relative decisions
    history: List[tuple] = field(default_factory=list)        # cumulative permutation per chunk


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.sum(a * b) / (na * nb))


def choose_permutation(current: np.ndarray, previous: np.ndarray, prior=IDENTITY) -> tuple:
    """Best assignment of ``current`` streams to ``previous`` streams by magnitude cosine.

    Both are ``(2, N, F)`` magnitudes over the overlapping frames.  Ties keep
    ``prior``.
    """
    ident = cosine(current[0], previous[0]) + cosine(current[1], previous[1])
    swap = cosine(current[1], previous[0]) + cosine(current[0], previous[1])
    if np.isclose(ident, swap, rtol=0, atol=1e-12):
        return prior
    return IDENTITY if ident > swap else SWAP


def stitch(state: StitchState, current: np.ndarray, previous: np.ndarray = None):
    """Decide the permutation for one chunk and record it.

    ``current`` holds this chunk's stream magnitudes over its history region;
    ``previous`` the already-emitted stitched output over the same frames
    (``None`` for the first chunk).  Returns the absolute permutation: stream
    ``j`` of the stitched output takes chunk stream ``perm[j]``.
    """
    if previous is None or previous.shape[1] == 0:
        perm = state.permutation
    else:
        perm = choose_permutation(current, previous, state.permutation)
    # relative decision r satisfies perm == compose(previous permutation, r)
    relative = tuple(state.permutation.index(p) for p in perm)
    state.decisions.append(relative)
    state.permutation = perm
    state.history.append(perm)
    return perm


def apply_permutation(streams, perm):
    return [streams[p] for p in perm]
