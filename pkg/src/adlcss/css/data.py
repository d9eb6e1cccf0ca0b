"""Manifest records as in-memory spectrogram examples."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..signal.stft import STFTConfig, stft_array
from ..sim.mixture import load_record, read_manifest
from ..signal.wav import read_wav


@dataclass
class Example:
    id: str
    sample_rate: int
    mixture: np.ndarray        # (C, N) waveform
    references: np.ndarray     # (2, N) channel-0 reverberant images; zeros for an absent source
    Y: np.ndarray              # (C, T, F) mixture STFT
    R: np.ndarray              # (2, T, F) reference STFTs
    components: Optional[np.ndarray] = None    # (3, C, T, F) complex64: two source images, noise


def load_examples(manifest, cfg: STFTConfig, channels: int = None,
                  components: bool = False) -> List[Example]:
    """Load every manifest record; ``components=True`` also keeps per-component STFTs for remixing."""
    out = []
    for rec in read_manifest(manifest):
        mix, refs = load_record(rec)
        x = mix.samples if channels is None else mix.samples[:channels]
        c = x.shape[0]
        r = np.zeros((2, mix.num_samples))
        for k, ref in enumerate(refs[:2]):
            r[k] = ref[0]
        comp = None
        if components:
            parts = [ref[:c] for ref in refs[:2]]
            parts += [np.zeros_like(x)] * (2 - len(parts))
            parts.append(read_wav(Path(rec["_root"]) / rec["noise"]).samples[:c])
            comp = np.stack([stft_array(p, cfg) for p in parts]).astype(np.complex64)
        out.append(Example(rec["id"], mix.sample_rate, x, r, stft_array(x, cfg), stft_array(r, cfg), comp))
    return out


def make_batch(examples, rng: np.random.Generator, segment_frames: int = None):
    """Stack examples (cropped to a common random ``segment_frames`` window)."""
    frames = min(e.Y.shape[1] for e in examples)
    seg = frames if not segment_frames else min(segment_frames, frames)
    Ys, Rs = [], []
    for e in examples:
        start = int(rng.integers(0, e.Y.shape[1] - seg + 1)) if e.Y.shape[1] > seg else 0
        Ys.append(e.Y[:, start:start + seg])
        Rs.append(e.R[:, start:start + seg])
    return np.stack(Ys), np.stack(Rs)


def _crop(x: np.ndarray, rng: np.random.Generator, seg: int) -> np.ndarray:
    start = int(rng.integers(0, x.shape[-2] - seg + 1))
    return x[..., start:start + seg, :]


def _active(e: Example) -> list:
    return [k for k in range(2) if np.any(e.components[k])]


def remix_batch(examples, rng: np.random.Generator, batch: int, segment_frames: int = None,
                ser_range=(-5.0, 5.0), single_prob: float = 0.2):
    """Fresh mixtures from the stored components of random examples.

    Each item takes one source image from two different examples and the noise of a
    third, every component from its own random crop.  The second source is rescaled
    to a source energy ratio drawn from ``ser_range`` and dropped with ``single_prob``.
    """
    if any(e.components is None for e in examples):
        raise ValueError("remixing needs examples loaded with components=True")
    n = len(examples)
    frames = min(e.Y.shape[1] for e in examples)
    seg = frames if not segment_frames else min(segment_frames, frames)
    Ys, Rs = [], []
    for _ in range(batch):
        i, j, k = rng.choice(n, size=3, replace=n < 3)
        a = _crop(examples[i].components[rng.choice(_active(examples[i]))], rng, seg)
        b = np.zeros_like(a)
        if rng.random() >= single_prob:
            b = _crop(examples[j].components[rng.choice(_active(examples[j]))], rng, seg)
            ea, eb = np.sum(np.abs(a[0]) ** 2), np.sum(np.abs(b[0]) ** 2)
            if ea > 0 and eb > 0:
                ser = rng.uniform(*ser_range)
                b = b * np.sqrt(ea / eb * 10.0 ** (-ser / 10.0))
        noise = _crop(examples[k].components[2], rng, seg)
        Ys.append(a + b + noise)
        Rs.append(np.stack([a[0], b[0]]))
    return np.stack(Ys).astype(np.complex128), np.stack(Rs).astype(np.complex128)
