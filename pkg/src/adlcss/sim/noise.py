"""Spherically isotropic noise and point-noise signals."""

from __future__ import annotations

import numpy as np

from ..signal.wav import MultichannelWaveform

SINC_TAPS = 16


def fractional_delay_filter(delay: float, taps: int = SINC_TAPS):
    """Hann-windowed sinc taps for a delay of ``delay`` samples.

    Returns ``(first_index, coefficients)``: ``y[n] = sum_j c[j] x[n - first - j]``.
    """
    base = int(np.floor(delay))
    first = base - taps // 2 + 1
    k = np.arange(first, first + taps)
    x = k - delay
    window = 0.5 * (1.0 + np.cos(2.0 * np.pi * x / (taps + 1)))
    return first, np.sinc(x) * window


def apply_delay(x: np.ndarray, delay: float, out_len: int, margin: int) -> np.ndarray:
    """Delay ``x`` (which carries ``margin`` extra samples on both ends)."""
    first, coef = fractional_delay_filter(delay)
    y = np.zeros(out_len)
    for j, c in enumerate(coef):
        shift = first + j
        y += c * x[margin - shift:margin - shift + out_len]
    return y


def sphere_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate_isotropic_noise(mic_positions, num_samples: int, sample_rate: int = 16000,
                             rng: np.random.Generator = None, directions: int = 128,
                             speed_of_sound: float = 343.0) -> MultichannelWaveform:
    """Sum of ``directions`` independent white plane waves from random sphere directions.

    Unit variance per channel; inter-channel coherence approaches
    ``sin(kd) / (kd)`` as ``directions`` grows.
    """
    if directions < 64:
        raise ValueError("isotropic field needs at least 64 plane waves")
    rng = rng or np.random.default_rng()
    mics = np.asarray(mic_positions, dtype=np.float64).reshape(-1, 3)
    rel = mics - mics.mean(axis=0)
    dirs = sphere_directions(rng, directions)
    # arrival-time offsets: a sensor further along the arrival direction hears earlier
    delays = -(rel @ dirs.T) / speed_of_sound * sample_rate      # (C, D)
    margin = int(np.ceil(np.abs(delays).max())) + SINC_TAPS + 1
    out = np.zeros((len(mics), num_samples))
    for d in range(directions):
        wave = rng.normal(size=num_samples + 2 * margin)
        for c in range(len(mics)):
            out[c] += apply_delay(wave, delays[c, d], num_samples, margin)
    out /= np.sqrt(directions)
    return MultichannelWaveform(out, sample_rate)


def colored_noise(rng: np.random.Generator, num_samples: int, sample_rate: int) -> np.ndarray:
    """Stationary noise with a random spectral tilt and a random resonant band."""
    spec = rng.normal(size=num_samples // 2 + 1) + 1j * rng.normal(size=num_samples // 2 + 1)
    f = np.fft.rfftfreq(num_samples, 1.0 / sample_rate)
    tilt = rng.uniform(0.0, 1.5)
    centre = rng.uniform(200.0, 0.4 * sample_rate)
    width = rng.uniform(100.0, 800.0)
    shape = (1.0 + f / 100.0) ** (-tilt / 2.0) + 0.5 * np.exp(-0.5 * ((f - centre) / width) ** 2)
    x = np.fft.irfft(spec * shape, n=num_samples)
    return x / (np.std(x) + 1e-12)
