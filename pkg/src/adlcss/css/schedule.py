"""Sliding history/current/future windows over the frame axis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np


def seconds_to_frames(seconds: float, sample_rate: int, hop: int) -> int:
    return int(round(seconds * sample_rate / hop))


@dataclass
class ChunkSchedule:
    total: int
    history: int
    current: int
    future: int
    # (window_start, current_start, current_end, window_end); windows may reach
    # outside [0, total) and are zero-padded there
    chunks: List[Tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def window(self) -> int:
        return self.history + self.current + self.future

    def __len__(self):
        return len(self.chunks)

    def current_frames(self) -> np.ndarray:
        if not self.chunks:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange(s, min(e, self.total)) for _, s, e, _ in self.chunks])


def make_schedule(total: int, history: int, current: int, future: int) -> ChunkSchedule:
    """Chunks advance by ``current`` frames; the last current window may run past the end."""
    if current < 1:
        raise ValueError("current window needs at least one frame")
    if history < 0 or future < 0:
        raise ValueError("history and future must be non-negative")
    sched = ChunkSchedule(total, history, current, future)
    for s in range(0, max(total, 0), current):
        sched.chunks.append((s - history, s, s + current, s + current + future))
    return sched


def extract_window(spec: np.ndarray, start: int, end: int) -> np.ndarray:
    """Frames ``[start, end)`` of ``(..., T, F)`` with zeros outside the recording."""
    t = spec.shape[-2]
    out = np.zeros(spec.shape[:-2] + (end - start, spec.shape[-1]), dtype=spec.dtype)
    a, b = max(start, 0), min(end, t)
    if b > a:
        out[..., a - start:b - start, :] = spec[..., a:b, :]
    return out
