"""HTK-scale triangular mel filterbank and log-mel features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import Tensor

LOG_FLOOR = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class MelFilterbank:
    """``weights`` is ``(F, n_mels)``; triangles are built on the mel axis."""

    weights: np.ndarray
    floor: float = LOG_FLOOR

    @classmethod
    def create(cls, sample_rate: int, fft_size: int, n_mels: int = 80,
               floor: float = LOG_FLOOR) -> "MelFilterbank":
        bins = fft_size // 2 + 1
        bin_mel = hz_to_mel(np.arange(bins) * sample_rate / fft_size)
        edges = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
        lo, mid, hi = edges[:-2], edges[1:-1], edges[2:]
        up = (bin_mel[:, None] - lo) / (mid - lo)
        down = (hi - bin_mel[:, None]) / (hi - mid)
        w = np.maximum(0.0, np.minimum(up, down))
        # a triangle narrower than the bin spacing keeps its nearest bin
        for m in np.flatnonzero(w.sum(axis=0) <= 0):
            w[np.argmin(np.abs(bin_mel - mid[m])), m] = 1.0
        return cls(w, floor)

    @property
    def n_mels(self) -> int:
        return self.weights.shape[1]

    def power(self, magnitude: np.ndarray) -> np.ndarray:
        return (np.asarray(magnitude) ** 2) @ self.weights


def log_mel(magnitude, bank: MelFilterbank):
    """``log(max(|X|^2 @ W, floor))`` over the last (bin) axis.

    Accepts numpy arrays or tensors (differentiable path for the loss).
    """
    if isinstance(magnitude, Tensor):
        power = ops.matmul(ops.square(magnitude), Tensor(bank.weights))
        return ops.log(ops.maximum(power, bank.floor))
    return np.log(np.maximum(bank.power(magnitude), bank.floor))
