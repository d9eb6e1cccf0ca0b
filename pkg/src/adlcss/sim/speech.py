"""Self-contained pseudo-speech: band-limited, syllable-modulated harmonic plus noise."""

from __future__ import annotations

import numpy as np


def _envelope(rng: np.random.Generator, num_samples: int, sample_rate: int):
    """Syllable on/off envelope plus per-syllable onset indices."""
    env = np.zeros(num_samples)
    marks = []
    pos = int(rng.uniform(0.0, 0.05) * sample_rate)
    while pos < num_samples:
        dur = int(rng.uniform(0.12, 0.35) * sample_rate)
        end = min(pos + dur, num_samples)
        if end - pos > 8:
            shape = np.hanning(dur) ** rng.uniform(0.3, 1.0)
            env[pos:end] = shape[:end - pos] * rng.uniform(0.5, 1.0)
            marks.append((pos, end))
        pos = end + int(rng.uniform(0.02, 0.15) * sample_rate)
    return env, marks


def pseudo_speech(rng: np.random.Generator, num_samples: int, sample_rate: int = 16000,
                  f0: float = None) -> np.ndarray:
    """Unit-RMS pseudo-speech.

    A gliding pitch contour drives an additive harmonic source whose amplitudes
    follow three moving formant resonances; breath noise shares the resonances.
    Syllables switch on and off at a 3-6 Hz rate, leaving silent gaps.
    """
    nyq = 0.5 * sample_rate
    f0 = f0 if f0 is not None else rng.uniform(90.0, 250.0)
    t = np.arange(num_samples) / sample_rate
    drift = 1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.2, 0.8) * t + rng.uniform(0, 2 * np.pi))
    pitch = f0 * drift * (1.0 + 0.02 * np.sin(2 * np.pi * 5.0 * t))
    phase = 2 * np.pi * np.cumsum(pitch) / sample_rate
    env, marks = _envelope(rng, num_samples, sample_rate)

    # formant tracks: piecewise-linear between syllable targets
    knots = np.array([0] + [m[0] for m in marks] + [num_samples - 1], dtype=float)
    lo = np.array([250.0, 800.0, 2200.0])
    hi = np.array([900.0, 2300.0, min(3500.0, 0.9 * nyq)])
    targets = rng.uniform(lo, hi, size=(len(knots), 3))
    formants = np.stack([np.interp(np.arange(num_samples), knots, targets[:, i]) for i in range(3)])
    bw = np.array([80.0, 120.0, 180.0])[:, None]

    def resonance(freq):
        return np.sum(1.0 / (1.0 + ((freq[None] - formants) / bw) ** 2), axis=0)

    voiced = np.zeros(num_samples)
    limit = min(4000.0, 0.9 * nyq)
    for h in range(1, int(limit / (0.9 * f0)) + 1):
        freq = h * pitch
        amp = np.where(freq < limit, resonance(freq), 0.0) / np.sqrt(h)
        voiced += amp * np.cos(h * phase)
    breath = rng.normal(size=num_samples)
    spec = np.fft.rfft(breath)
    f = np.fft.rfftfreq(num_samples, 1.0 / sample_rate)
    mean_formants = formants.mean(axis=1)
    shape = np.sum(1.0 / (1.0 + ((f[None] - mean_formants[:, None]) / 300.0) ** 2), axis=0)
    shape[(f < 80.0) | (f > limit)] = 0.0
    breath = np.fft.irfft(spec * shape, n=num_samples)
    breath /= np.std(breath) + 1e-12
    voiced /= np.std(voiced) + 1e-12
    x = env * (voiced + 0.1 * breath)
    rms = np.sqrt(np.mean(x ** 2))
    return x / (rms + 1e-12)
