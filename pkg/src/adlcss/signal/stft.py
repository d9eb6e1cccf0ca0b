"""Short-time Fourier analysis/synthesis with a constant-overlap-add check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .wav import MultichannelWaveform


def make_window(name: str, size: int) -> np.ndarray:
    n = np.arange(size)
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * n / size)
    if name == "sqrt-hann":
        return np.sqrt(hann)
    if name == "hann":
        return hann
    if name == "rect":
        return np.ones(size)
    raise ValueError(f"unknown window {name!r} (sqrt-hann, hann, rect)")


@dataclass(frozen=True)
class STFTConfig:
    fft_size: int = 512
    hop: int = 256
    window: str = "sqrt-hann"
    _win: np.ndarray = field(init=False, repr=False, compare=False)
    _norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.hop < 1 or self.hop > self.fft_size:
            raise ValueError(f"hop must be in [1, fft_size], got {self.hop}")
        win = make_window(self.window, self.fft_size)
        # analysis and synthesis share the window, so w^2 must overlap-add flat
        overlap = np.zeros(self.hop)
        w2 = win * win
        for start in range(0, self.fft_size, self.hop):
            seg = w2[start:start + self.hop]
            overlap[:len(seg)] += seg
        if not np.allclose(overlap, overlap[0], rtol=1e-10, atol=1e-12) or overlap[0] <= 0:
            raise ValueError(f"window {self.window!r} with fft_size={self.fft_size}, "
                             f"hop={self.hop} is not constant-overlap-add")
        object.__setattr__(self, "_win", win)
        object.__setattr__(self, "_norm", float(overlap[0]))

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window_array(self) -> np.ndarray:
        return self._win

    @property
    def lead(self) -> int:
        return self.fft_size - self.hop

    def num_frames(self, num_samples: int) -> int:
        return -(-(num_samples + self.lead) // self.hop)


@dataclass
class ComplexSpectrogram:
    """``data`` is ``(C, T, F)`` complex128."""

    data: np.ndarray
    config: STFTConfig
    sample_rate: int
    length: int

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def bins(self) -> int:
        return self.data.shape[2]


def stft_array(x: np.ndarray, cfg: STFTConfig) -> np.ndarray:
    """``(..., N)`` real -> ``(..., T, F)`` complex."""
    n = x.shape[-1]
    frames = cfg.num_frames(n)
    total = (frames - 1) * cfg.hop + cfg.fft_size
    pad = [(0, 0)] * (x.ndim - 1) + [(cfg.lead, total - cfg.lead - n)]
    xp = np.pad(x, pad)
    idx = np.arange(frames)[:, None] * cfg.hop + np.arange(cfg.fft_size)[None, :]
    return np.fft.rfft(xp[..., idx] * cfg.window_array, axis=-1)


def istft_array(spec: np.ndarray, cfg: STFTConfig, length: int) -> np.ndarray:
    """``(..., T, F)`` complex -> ``(..., length)`` real."""
    frames = spec.shape[-2]
    seg = np.fft.irfft(spec, n=cfg.fft_size, axis=-1) * cfg.window_array
    total = (frames - 1) * cfg.hop + cfg.fft_size
    out = np.zeros(spec.shape[:-2] + (total,))
    for t in range(frames):
        out[..., t * cfg.hop:t * cfg.hop + cfg.fft_size] += seg[..., t, :]
    out /= cfg._norm
    return out[..., cfg.lead:cfg.lead + length]


def stft(waveform: MultichannelWaveform, cfg: STFTConfig = None) -> ComplexSpectrogram:
    cfg = cfg or STFTConfig()
    return ComplexSpectrogram(stft_array(waveform.samples, cfg), cfg,
                              waveform.sample_rate, waveform.num_samples)


def istft(spec: ComplexSpectrogram) -> MultichannelWaveform:
    return MultichannelWaveform(istft_array(spec.data, spec.config, spec.length), spec.sample_rate)
