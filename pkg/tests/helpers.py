"""Shared toy configurations for the pipeline tests."""

import numpy as np

from adlcss.config import RunConfig

TINY = {
    "stft.fft_size": 64, "stft.hop": 32,
    "sim.sample_rate": 8000, "sim.duration": 1.0, "sim.max_order": 2, "sim.rir_seconds": 0.1,
    "sim.iso_directions": 64,
    "model.channels": 3, "model.width": 16, "model.heads": 2, "model.kernel": 5,
    "model.ff_mult": 2, "model.encoder_layers": 2, "model.decoder_layers": 1,
    "model.v_hidden": (8, 6), "model.vv_hidden": (8, 8), "model.vad_hidden": (8, 8),
    "train.batch_size": 2, "train.segment_seconds": 0.5, "train.warmup_steps": 5,
    "train.log_every": 0,
    "css.history": 0.12, "css.current": 0.08, "css.future": 0.04,
}


def tiny_config(**overrides) -> RunConfig:
    values = dict(TINY)
    values.update({k.replace("__", "."): v for k, v in overrides.items()})
    return RunConfig(values)


def random_recording(rng, channels, seconds, sample_rate=8000):
    return 0.1 * rng.standard_normal((channels, int(seconds * sample_rate)))
