"""Flat key=value run configuration with typed defaults."""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Iterable

from .sim.mixture import SimConfig


class ConfigError(ValueError):
    pass


def _sim_defaults() -> dict:
    out = {}
    for f in fields(SimConfig):
        out[f"sim.{f.name}"] = getattr(SimConfig(), f.name)
    return out


DEFAULTS = {
    "stft.fft_size": 512,
    "stft.hop": 256,
    "stft.window": "sqrt-hann",
    **_sim_defaults(),
    "model.channels": 7,
    "model.mask_variant": "real",
    "model.width": 64,
    "model.heads": 4,
    "model.kernel": 33,
    "model.ff_mult": 4,
    "model.encoder_layers": 4,
    "model.tac_blocks": 1,
    "model.decoder_layers": 2,
    "model.ipd_ref": "ch0",
    "model.v_hidden": (200, 100),
    "model.vv_hidden": (200, 200),
    "model.vad_hidden": (200, 200),
    "model.norm_v": True,
    "model.psd": True,
    "model.vad": True,
    "model.residual": True,
    "model.alpha": 0.5,
    "model.vad_cap": None,
    "model.bf_input": "trace-log",
    "model.bf_init": "pass-through",
    "model.normalization": "chunk",
    "train.loss": "magnitude",
    "train.phase": "both",
    "train.trainable": "all",
    "train.pretrain_epochs": 50,
    "train.joint_epochs": 100,
    "train.max_steps": 0,
    "train.batch_size": 4,
    "train.segment_seconds": 4.0,
    "train.peak_lr": 1e-3,
    "train.warmup_steps": 1000,
    "train.decay": 0.98,
    "train.weight_decay": 1e-2,
    "train.grad_clip": 5.0,
    "train.log_every": 10,
    "train.checkpoint_every_epoch": True,
    "train.dynamic_mix": False,
    "css.history": 1.2,
    "css.current": 0.8,
    "css.future": 0.4,
    "css.carry_state": True,
    "css.normalization": "chunk",
}

_OPTIONAL_FLOAT = {"model.vad_cap"}


def _parse(key: str, text: str):
    default = DEFAULTS[key]
    text = text.strip()
    try:
        if key in _OPTIONAL_FLOAT:
            return None if text.lower() in ("none", "") else float(text)
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0])
            return tuple(kind(p) for p in text.replace(" ", "").strip("()").split(",") if p)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


class RunConfig:
    def __init__(self, values: dict = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse(key, value) if isinstance(value, str) else value

    def __getitem__(self, key: str):
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def copy(self) -> "RunConfig":
        return RunConfig(self.values)

    def section(self, prefix: str) -> dict:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def apply(self, assignments: Iterable[str]) -> "RunConfig":
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"expected key=value, got {item!r}")
            k, v = item.split("=", 1)
            self.set(k.strip(), v)
        return self

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls().load_file(path)

    def load_file(self, path) -> "RunConfig":
        """Apply ``key = value`` lines from ``path`` on top of the current values."""
        cfg = self
        lines = Path(path).read_text().splitlines()
        for n, line in enumerate(lines, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            try:
                cfg.set(k.strip(), v)
            except ConfigError as e:
                raise ConfigError(f"{path}:{n}: {e}") from None
        return cfg

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for k, v in d.items():
            if k in DEFAULTS:
                cfg.set(k, tuple(v) if isinstance(v, list) else v)
        return cfg

    def dumps(self) -> str:
        def fmt(v):
            if isinstance(v, tuple):
                return ",".join(str(x) for x in v)
            if isinstance(v, bool):
                return "true" if v else "false"
            return "none" if v is None else str(v)
        return "".join(f"{k} = {fmt(v)}\n" for k, v in sorted(self.values.items()))

    # builders -----------------------------------------------------------------

    def stft(self):
        from .signal.stft import STFTConfig
        s = self.section("stft")
        return STFTConfig(fft_size=s["fft_size"], hop=s["hop"], window=s["window"])

    def sim(self) -> SimConfig:
        return SimConfig(**self.section("sim"))
