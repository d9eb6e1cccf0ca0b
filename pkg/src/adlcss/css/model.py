"""Mask estimator plus beamformer as one trainable separation system."""

from __future__ import annotations

import numpy as np

from ..autodiff.cplx import CTensor, mul
from ..autodiff.nn import Module
from ..beamformer.adl import ADLBeamformer, BeamformerConfig
from ..beamformer.classical import classical_mvdr
from ..config import RunConfig
from ..masknet import MaskNet, MaskNetConfig

MODES = ("mask-only", "classical-mvdr", "adl-mvdr")


def masknet_config(rc: RunConfig, bins: int) -> MaskNetConfig:
    m = rc.section("model")
    return MaskNetConfig(bins=bins, width=m["width"], heads=m["heads"], kernel=m["kernel"],
                         ff_mult=m["ff_mult"], encoder_layers=m["encoder_layers"],
                         tac_blocks=m["tac_blocks"], decoder_layers=m["decoder_layers"],
                         variant=m["mask_variant"], ipd_ref=m["ipd_ref"])


def beamformer_config(rc: RunConfig) -> BeamformerConfig:
    m = rc.section("model")
    return BeamformerConfig(channels=m["channels"], v_hidden=m["v_hidden"],
                            vv_hidden=m["vv_hidden"], vad_hidden=m["vad_hidden"],
                            norm_v=m["norm_v"], psd=m["psd"], vad=m["vad"],
                            residual=m["residual"], alpha=m["alpha"], vad_cap=m["vad_cap"],
                            normalization=m["normalization"], input_mode=m["bf_input"],
                            init=m["bf_init"])


def masked_reference(masks, Y: np.ndarray) -> CTensor:
    """Speaker masks applied to channel 0: ``(B, 2, T, F)``."""
    y0 = CTensor.from_numpy(np.ascontiguousarray(Y[:, :1]))              # (B, 1, T, F)
    m = masks[:, 0:2]
    if isinstance(m, CTensor):
        return mul(m, y0)
    return y0 * m


class SeparationModel(Module):
    """Parameters live under ``masknet.`` and ``beamformer.`` in checkpoints."""

    def __init__(self, rc: RunConfig, rng: np.random.Generator):
        self.rc = rc
        stft = rc.stft()
        self.bins = stft.bins
        self.masknet = MaskNet(masknet_config(rc, self.bins), rng)
        self.beamformer = ADLBeamformer(beamformer_config(rc), self.bins, rng)

    def forward(self, Y: np.ndarray, mode: str = "adl-mvdr", state: dict = None,
                keep: bool = False) -> dict:
        """``Y`` complex ``(B, C, T, F)`` -> ``{"estimates": (B, 2, T, F), "masks": MaskSet, ...}``."""
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
        Y = np.asarray(Y)
        if Y.ndim == 3:
            Y = Y[None]
        if Y.shape[1] < 1:
            raise ValueError("recording has no channels")
        masks = self.masknet(Y)
        out = {"masks": masks}
        if mode == "mask-only":
            out["estimates"] = masked_reference(masks.masks, Y)
        elif mode == "classical-mvdr":
            est, h, v = classical_mvdr(Y, masks.numpy())
            out.update(estimates=CTensor.from_numpy(est), h=h, steering=v)
        else:
            res = self.beamformer(Y, masks.masks, state=state, keep=keep)
            out["estimates"] = res.pop("output")
            out.update(res)
        return out

    __call__ = forward

    def trainable(self, which: str) -> dict:
        """Named parameters for ``all`` | ``masknet`` | ``beamformer`` | ``none``."""
        named = dict(self.named_parameters())
        if which == "all":
            return named
        if which == "none":
            return {}
        if which in ("masknet", "beamformer"):
            return {k: v for k, v in named.items() if k.startswith(which + ".")}
        raise ValueError(f"unknown trainable set {which!r}")
