"""AdamW with decoupled weight decay and a warm-up / exponential-decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np


@dataclass
class LRSchedule:
    """Linear warm-up to ``peak`` then ``decay`` per ``steps_per_epoch`` steps."""

    peak: float = 1e-3
    warmup_steps: int = 1000
    decay: float = 0.98
    steps_per_epoch: int = 1

    def __call__(self, step: int) -> float:
        if self.warmup_steps > 0 and step < self.warmup_steps:
            return self.peak * (step + 1) / self.warmup_steps
        epochs = (step - self.warmup_steps) / max(self.steps_per_epoch, 1)
        return self.peak * self.decay ** epochs


@dataclass
class AdamWState:
    schedule: LRSchedule = field(default_factory=LRSchedule)
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: Mapping[str, "object"], grads: Mapping[str, np.ndarray],
               state: AdamWState) -> None:
    """Update ``params[name].data`` in place from ``grads[name]``.

    Parameters without a gradient this step are still decayed.
    """
    lr = state.schedule(state.step)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = p.data * (1.0 - lr * state.weight_decay) - lr * update
