"""Reverberant multichannel mixtures at controlled energy ratios."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from ..signal.wav import MultichannelWaveform, read_wav, write_wav
from .noise import colored_noise, generate_isotropic_noise
from .rir import RoomConfig, simulate_rirs
from .speech import pseudo_speech


@dataclass
class SimConfig:
    sample_rate: int = 16000
    duration: float = 4.0
    channels: int = 7
    single_speaker_prob: float = 0.2
    ser_range: tuple = (-5.0, 5.0)
    iso_snr_range: tuple = (0.0, 10.0)
    point_snr_range: tuple = (-5.0, 10.0)
    room_xy_range: tuple = (4.0, 8.0)
    room_height_range: tuple = (2.5, 4.0)
    absorption_range: tuple = (0.2, 0.6)
    max_order: int = 10
    rir_seconds: float = 0.25
    mic_radius: float = 0.0425
    level_db: float = -25.0
    iso_directions: int = 128
    min_separation_deg: float = 20.0
    speed_of_sound: float = 343.0

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass
class MixtureSpec:
    num_sources: int
    ser_db: float = 0.0
    iso_snr_db: Optional[float] = None
    point_snr_db: Optional[float] = None
    onsets: List[int] = field(default_factory=list)
    lengths: List[int] = field(default_factory=list)
    seed: int = 0

    def validate(self, cfg: SimConfig = None) -> None:
        cfg = cfg or SimConfig()
        if self.num_sources not in (1, 2):
            raise ValueError(f"num_sources must be 1 or 2, got {self.num_sources}")
        checks = [("ser_db", self.ser_db, cfg.ser_range),
                  ("iso_snr_db", self.iso_snr_db, cfg.iso_snr_range),
                  ("point_snr_db", self.point_snr_db, cfg.point_snr_range)]
        for name, val, (lo, hi) in checks:
            if val is not None and not lo <= val <= hi:
                raise ValueError(f"{name}={val} outside [{lo}, {hi}]")
        if len(self.onsets) != self.num_sources or len(self.lengths) != self.num_sources:
            raise ValueError("onsets/lengths must give one entry per source")


@dataclass
class MixtureResult:
    mixture: MultichannelWaveform
    references: List[np.ndarray]          # per source, (C, N) reverberant image
    noise: np.ndarray                     # (C, N) isotropic + point noise
    realized: dict


def energy(x: np.ndarray) -> float:
    return float(np.sum(np.asarray(x, dtype=np.float64) ** 2))


def db_ratio(a: float, b: float) -> float:
    return 10.0 * np.log10(a / b)


def circular_array(channels: int, radius: float, center) -> np.ndarray:
    """Microphone 0 at the centre, the rest evenly on a horizontal circle."""
    center = np.asarray(center, dtype=np.float64)
    if channels == 1:
        return center[None]
    ang = 2 * np.pi * np.arange(channels - 1) / (channels - 1)
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros_like(ang)], axis=1)
    return np.vstack([center, center + ring])


def overlap_layout(rng: np.random.Generator, num_sources: int, num_samples: int):
    """Onsets/lengths; two-source overlap ratio is uniform on [0, 1] (mean 0.5)."""
    if num_sources == 1:
        return [0], [num_samples]
    overlap = rng.uniform(0.0, 1.0) * num_samples
    total = num_samples + overlap
    first = int(round(np.clip(total / 2 * (1 + rng.uniform(-0.2, 0.2)), overlap, num_samples)))
    second = int(round(total)) - first
    second = int(np.clip(second, 1, num_samples))
    onsets, lengths = [0, num_samples - second], [first, second]
    if rng.random() < 0.5:
        onsets, lengths = onsets[::-1], lengths[::-1]
    return onsets, lengths


def overlap_ratio(onsets: Sequence[int], lengths: Sequence[int]) -> float:
    if len(onsets) < 2:
        return 0.0
    (a0, b0), (a1, b1) = [(o, o + n) for o, n in zip(onsets, lengths)]
    inter = max(0, min(b0, b1) - max(a0, a1))
    union = max(b0, b1) - min(a0, a1)
    return inter / union


def sample_mixture_spec(rng: np.random.Generator, cfg: SimConfig, seed: int = 0,
                        num_sources: int = None) -> MixtureSpec:
    if num_sources is None:
        num_sources = 1 if rng.random() < cfg.single_speaker_prob else 2
    onsets, lengths = overlap_layout(rng, num_sources, cfg.num_samples)
    return MixtureSpec(
        num_sources=num_sources,
        ser_db=float(rng.uniform(*cfg.ser_range)) if num_sources == 2 else 0.0,
        iso_snr_db=float(rng.uniform(*cfg.iso_snr_range)),
        point_snr_db=float(rng.uniform(*cfg.point_snr_range)),
        onsets=onsets, lengths=lengths, seed=seed)


def sample_room(rng: np.random.Generator, cfg: SimConfig, channels: int,
                num_sources: int = 2):
    """Random shoebox with a circular array, speech sources and one point-noise source."""
    dims = np.array([rng.uniform(*cfg.room_xy_range), rng.uniform(*cfg.room_xy_range),
                     rng.uniform(*cfg.room_height_range)])
    absorption = rng.uniform(*cfg.absorption_range, size=6)
    center = np.array([rng.uniform(1.0, dims[0] - 1.0), rng.uniform(1.0, dims[1] - 1.0),
                       rng.uniform(0.8, 1.5)])
    mics = circular_array(channels, cfg.mic_radius, center)
    sources, azimuths = [], []
    while len(sources) < num_sources:
        az = rng.uniform(0, 2 * np.pi)
        if any(np.degrees(abs(np.angle(np.exp(1j * (az - a))))) < cfg.min_separation_deg
               for a in azimuths):
            continue
        dist = rng.uniform(0.5, 2.5)
        p = center + np.array([dist * np.cos(az), dist * np.sin(az), 0.0])
        p[2] = rng.uniform(1.2, 1.9)
        if np.all(p > 0.3) and np.all(p < dims - 0.3):
            sources.append(p)
            azimuths.append(az)
    while True:
        noise_pos = rng.uniform(0.3, dims - 0.3)
        if np.linalg.norm(noise_pos - center) > 0.5:
            break
    room = RoomConfig(dims, absorption, mics, np.array(sources),
                      speed_of_sound=cfg.speed_of_sound, max_order=cfg.max_order)
    return room, noise_pos


def synthesize_mixture(spec: MixtureSpec, room: RoomConfig, dry_sources: Sequence[np.ndarray],
                       cfg: SimConfig = None, rng: np.random.Generator = None,
                       noise_position=None, point_noise: np.ndarray = None) -> MixtureResult:
    """Mix reverberant sources, isotropic noise and a reverberant point noise.

    Sources are scaled so the reference energies (all channels) meet
    ``spec.ser_db``; noises are scaled against the summed source energy.
    """
    cfg = cfg or SimConfig()
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    spec.validate(cfg)
    n = cfg.num_samples
    fs = cfg.sample_rate
    rir_len = int(round(cfg.rir_seconds * fs))
    if len(dry_sources) < spec.num_sources or room.sources.shape[0] < spec.num_sources:
        raise ValueError("need one dry signal and one room position per source")
    refs = []
    for k in range(spec.num_sources):
        dry = np.asarray(dry_sources[k], dtype=np.float64)
        if dry.ndim != 1:
            raise ValueError(f"dry source {k} must be mono, got shape {dry.shape}")
        seg = dry[:spec.lengths[k]]
        if energy(seg) <= 0:
            raise ValueError(f"dry source {k} is silent; energy ratios are undefined")
        placed = np.zeros(n)
        placed[spec.onsets[k]:spec.onsets[k] + len(seg)] = seg
        rirs = simulate_rirs(room, room.sources[k], fs, rir_len)
        refs.append(np.stack([fftconvolve(placed, h)[:n] for h in rirs]))
    if spec.num_sources == 2:
        refs[1] = refs[1] * np.sqrt(energy(refs[0]) / energy(refs[1]) / 10 ** (spec.ser_db / 10))
    speech_energy = sum(energy(r) for r in refs)
    c = room.mics.shape[0]
    noise = np.zeros((c, n))
    if spec.iso_snr_db is not None:
        iso = generate_isotropic_noise(room.mics, n, fs, rng, cfg.iso_directions,
                                       room.speed_of_sound).samples
        noise += iso * np.sqrt(speech_energy / energy(iso) / 10 ** (spec.iso_snr_db / 10))
    if spec.point_snr_db is not None:
        if noise_position is None:
            raise ValueError("point noise requested without a noise position")
        dry = point_noise if point_noise is not None else colored_noise(rng, n, fs)
        rirs = simulate_rirs(room, noise_position, fs, rir_len)
        pt = np.stack([fftconvolve(dry[:n], h)[:n] for h in rirs])
        noise += pt * np.sqrt(speech_energy / energy(pt) / 10 ** (spec.point_snr_db / 10))
    mix = sum(refs) + noise
    gain = 10 ** (cfg.level_db / 20) / (np.sqrt(np.mean(mix[0] ** 2)) + 1e-12)
    gain = min(gain, 0.99 / (np.max(np.abs(mix)) + 1e-12))
    refs = [r * gain for r in refs]
    noise = noise * gain
    mix = mix * gain
    realized = {"ser_db": db_ratio(energy(refs[0]), energy(refs[1])) if len(refs) == 2 else None}
    if spec.iso_snr_db is not None or spec.point_snr_db is not None:
        realized["noise_snr_db"] = db_ratio(sum(energy(r) for r in refs), energy(noise))
    realized["overlap_ratio"] = overlap_ratio(spec.onsets, spec.lengths)
    return MixtureResult(MultichannelWaveform(mix, fs), refs, noise, realized)


def simulate_dataset(out_dir, count: int, channels: int, seed: int, cfg: SimConfig = None,
                     dry_pool: Sequence[np.ndarray] = None, num_sources: int = None,
                     prefix: str = "mix") -> Path:
    """Write ``count`` mixtures plus ``manifest.jsonl`` into ``out_dir``.

    Each record carries the file paths (relative to the manifest), geometry,
    requested and realised ratios, and the per-mixture seed.
    """
    cfg = cfg or SimConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]
    manifest = out / "manifest.jsonl"
    lines = []
    for i, mseed in enumerate(seeds):
        rng = np.random.default_rng(mseed)
        spec = sample_mixture_spec(rng, cfg, seed=mseed, num_sources=num_sources)
        room, noise_pos = sample_room(rng, cfg, channels, spec.num_sources)
        if dry_pool:
            picks = rng.choice(len(dry_pool), size=spec.num_sources, replace=False)
            dry = [np.resize(dry_pool[j], cfg.num_samples) for j in picks]
        else:
            dry = [pseudo_speech(rng, cfg.num_samples, cfg.sample_rate)
                   for _ in range(spec.num_sources)]
        res = synthesize_mixture(spec, room, dry, cfg, rng, noise_pos)
        name = f"{prefix}_{i:05d}"
        write_wav(res.mixture, out / f"{name}.wav")
        ref_paths = []
        for k, r in enumerate(res.references):
            write_wav(MultichannelWaveform(r, cfg.sample_rate), out / f"{name}.src{k}.wav")
            ref_paths.append(f"{name}.src{k}.wav")
        write_wav(MultichannelWaveform(res.noise, cfg.sample_rate), out / f"{name}.noise.wav")
        record = {
            "id": name,
            "mixture": f"{name}.wav",
            "references": ref_paths,
            "noise": f"{name}.noise.wav",
            "sample_rate": cfg.sample_rate,
            "channels": channels,
            "num_samples": cfg.num_samples,
            "geometry": {
                "room": room.dimensions.tolist(),
                "absorption": room.absorption.tolist(),
                "mics": room.mics.tolist(),
                "sources": room.sources.tolist(),
                "noise_source": np.asarray(noise_pos).tolist(),
            },
            "spec": asdict(spec),
            "realized": res.realized,
            "seed": mseed,
        }
        lines.append(json.dumps(record, sort_keys=True))
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_manifest(path) -> list:
    path = Path(path)
    records = []
    for line in path.read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            rec["_root"] = str(path.parent)
            records.append(rec)
    return records


def load_record(rec: dict):
    """Return ``(mixture waveform, [reference (C, N) arrays])`` for a manifest record."""
    root = Path(rec["_root"])
    mix = read_wav(root / rec["mixture"])
    refs = [read_wav(root / p).samples for p in rec["references"]]
    return mix, refs
