"""Two-phase training loop: mask-only pretraining, then joint training with the beamformer."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np

from ..autodiff import checkpoint
from ..autodiff.optim import AdamWState, LRSchedule, adamw_step
from ..autodiff.tensor import backward
from ..config import RunConfig
from ..signal.mel import MelFilterbank
from .data import make_batch, remix_batch
from .losses import pit_loss
from .model import SeparationModel

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class PhasePlan:
    name: str
    mode: str
    trainable: str
    epochs: int


@dataclass
class TrainResult:
    losses: List[float] = field(default_factory=list)
    phases: List[str] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    final: str = ""


def plan_phases(rc: RunConfig) -> List[PhasePlan]:
    t = rc.section("train")
    pre = PhasePlan("pretrain", "mask-only", "masknet", t["pretrain_epochs"])
    joint = PhasePlan("joint", "adl-mvdr", t["trainable"], t["joint_epochs"])
    if t["phase"] == "pretrain":
        return [pre]
    if t["phase"] == "joint":
        return [joint]
    if t["phase"] == "both":
        return [pre, joint]
    raise ValueError(f"unknown train.phase {t['phase']!r}")


def save_model(model, path, rc: RunConfig, extra: dict = None) -> str:
    meta = {"config": rc.to_dict(), **(extra or {})}
    checkpoint.save(path, model.state_dict(), meta)
    return str(path)


def load_model(path, adjust=None):
    """Rebuild a model from a checkpoint.

    ``adjust(rc)`` may edit the stored config before the model is built (toggles,
    streaming settings); shape-changing edits fail on load.
    """
    tensors, meta = checkpoint.load(path)
    rc = RunConfig.from_dict(meta.get("config", {}))
    if adjust is not None:
        adjust(rc)
    model = SeparationModel(rc, np.random.default_rng(0))
    model.load_state_dict(tensors)
    return model, rc, meta


def _clip(grads: dict, limit: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if limit and norm > limit:
        for g in grads.values():
            g *= limit / norm
    return norm


def train(model: SeparationModel, examples, rc: RunConfig, out_dir, seed: int = 0,
          callback=None) -> TrainResult:
    """Train ``model`` in place; writes per-epoch checkpoints under ``out_dir``.

    Determinism: batches, crops and shuffles come from ``seed`` only.
    """
    t = rc.section("train")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    stft = rc.stft()
    bank = None
    if t["loss"] == "log-mel":
        bank = MelFilterbank.create(examples[0].sample_rate, stft.fft_size, 80)
    seg = int(round(t["segment_seconds"] * examples[0].sample_rate / stft.hop)) or None
    batch = max(1, t["batch_size"])
    per_epoch = math.ceil(len(examples) / batch)
    ser_range = tuple(rc["sim.ser_range"])
    result = TrainResult()
    all_params = dict(model.named_parameters())
    for phase in plan_phases(rc):
        params = model.trainable(phase.trainable)
        for name, p in all_params.items():
            p.requires_grad = name in params
        state = AdamWState(LRSchedule(t["peak_lr"], t["warmup_steps"], t["decay"], per_epoch),
                           weight_decay=t["weight_decay"])
        steps = phase.epochs * per_epoch
        if t["max_steps"]:
            steps = min(steps, t["max_steps"]) if phase.epochs else t["max_steps"]
        step = 0
        epoch = 0
        while step < steps:
            order = rng.permutation(len(examples))
            for i in range(0, len(order), batch):
                if step >= steps:
                    break
                if t["dynamic_mix"]:
                    Y, R = remix_batch(examples, rng, batch, seg, ser_range)
                else:
                    Y, R = make_batch([examples[j] for j in order[i:i + batch]], rng, seg)
                est = model(Y, mode=phase.mode)["estimates"]
                loss = pit_loss([est[:, 0], est[:, 1]], [R[:, 0], R[:, 1]], t["loss"], bank)
                value = float(loss.data)
                if not np.isfinite(value):
                    path = save_model(model, out / "last_good.adlb", rc,
                                      {"phase": phase.name, "step": step, "aborted": True})
                    result.checkpoints.append(path)
                    raise TrainingError(f"non-finite loss at {phase.name} step {step}; "
                                        f"last good parameters kept in {path}")
                grads = backward(loss)
                if params:
                    g = {n: grads[p] for n, p in params.items() if p in grads}
                    _clip(g, t["grad_clip"])
                    adamw_step(params, g, state)
                result.losses.append(value)
                result.phases.append(phase.name)
                if callback:
                    callback(phase.name, step, value)
                if t["log_every"] and step % t["log_every"] == 0:
                    log.info("%s step %d loss %.6g lr %.3g", phase.name, step, value,
                             state.schedule(max(state.step - 1, 0)))
                step += 1
            epoch += 1
            if t["checkpoint_every_epoch"]:
                path = save_model(model, out / f"{phase.name}_epoch{epoch:03d}.adlb", rc,
                                  {"phase": phase.name, "epoch": epoch, "step": step})
                result.checkpoints.append(path)
    for p in all_params.values():
        p.requires_grad = True
    result.final = save_model(model, out / "final.adlb", rc, {"steps": len(result.losses)})
    (out / "loss_curve.csv").write_text(
        "step,phase,loss\n" + "".join(f"{i},{ph},{v!r}\n" for i, (ph, v) in
                                      enumerate(zip(result.phases, result.losses))))
    return result
