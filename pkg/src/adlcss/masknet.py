"""Geometry-agnostic mask estimator: conformer encoder with TAC, channel pooling, conformer decoder."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .autodiff import ops as T
from .autodiff.cplx import CTensor
from .autodiff.nn import LayerNorm, Linear, Module, swish, uniform_init, zeros
from .autodiff.tensor import ShapeError, Tensor

FEATURE_EPS = 1e-8


@dataclass
class MaskNetConfig:
    bins: int = 257
    width: int = 64
    heads: int = 4
    kernel: int = 33
    ff_mult: int = 4
    encoder_layers: int = 4
    tac_blocks: int = 1
    decoder_layers: int = 2
    variant: str = "real"          # real | complex
    ipd_ref: str = "ch0"           # ch0 | mean
    conv_padding: str = "edge"

    def validate(self):
        if self.width % self.heads:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.variant not in ("real", "complex"):
            raise ValueError(f"unknown mask variant {self.variant!r}")
        if self.ipd_ref not in ("ch0", "mean"):
            raise ValueError(f"unknown ipd_ref {self.ipd_ref!r}")
        if self.kernel % 2 == 0:
            raise ValueError("convolution kernel must be odd")
        if self.tac_blocks > max(self.encoder_layers, 1):
            raise ValueError("more TAC blocks than encoder layers")


@dataclass
class MaskSet:
    """Three masks stacked on axis 1: speaker 0, speaker 1, noise; each ``(B, T, F)``."""

    masks: object            # Tensor (B, 3, T, F) or CTensor
    variant: str

    @property
    def speakers(self):
        return [self.masks[:, 0], self.masks[:, 1]]

    @property
    def noise(self):
        return self.masks[:, 2]

    def numpy(self) -> np.ndarray:
        return self.masks.numpy()


def input_features(Y: np.ndarray, ref: str = "ch0") -> np.ndarray:
    """``(B, C, T, F)`` complex -> ``(B, C, T, 3F)``: log power, cos and sin of phase vs reference."""
    Y = np.asarray(Y)
    logp = np.log(np.abs(Y) ** 2 + FEATURE_EPS)
    anchor = Y[:, :1] if ref == "ch0" else Y.sum(axis=1, keepdims=True)
    ipd = np.angle(Y * np.conj(anchor))
    return np.concatenate([logp, np.cos(ipd), np.sin(ipd)], axis=-1)


class FeedForward(Module):
    def __init__(self, rng, d, mult):
        self.norm = LayerNorm(d)
        self.up = Linear(rng, d, mult * d)
        self.down = Linear(rng, mult * d, d)

    def __call__(self, x):
        return self.down(swish(self.up(self.norm(x))))


class SelfAttention(Module):
    """Multi-head scaled dot-product attention over the time axis, no masking."""

    def __init__(self, rng, d, heads):
        self.norm = LayerNorm(d)
        self.qkv = Linear(rng, d, 3 * d)
        self.out = Linear(rng, d, d)
        self.heads = heads

    def __call__(self, x, return_attention=False):
        lead, (t, d) = x.shape[:-2], x.shape[-2:]
        h, dh = self.heads, d // self.heads
        qkv = T.reshape(self.qkv(self.norm(x)), lead + (t, 3, h, dh))
        q, k, v = (T.swapaxes(T.reshape(part, lead + (t, h, dh)), -2, -3)
                   for part in T.split(qkv, [1, 1, 1], axis=-3))   # (..., H, T, dh)
        scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
        attn = T.softmax(scores, axis=-1)
        ctx = T.matmul(attn, v)                                   # (..., H, T, dh)
        ctx = T.reshape(T.swapaxes(ctx, -2, -3), lead + (t, d))
        y = self.out(ctx)
        return (y, attn) if return_attention else y


class ConvModule(Module):
    """Pointwise -> GLU -> depthwise -> LayerNorm -> swish -> pointwise."""

    def __init__(self, rng, d, kernel, padding="edge"):
        self.norm = LayerNorm(d)
        self.pw1 = Linear(rng, d, 2 * d)
        self.dw = uniform_init(rng, kernel, (kernel, d))
        self.dw_b = zeros((d,))
        self.mid_norm = LayerNorm(d)
        self.pw2 = Linear(rng, d, d)
        self.padding = padding

    def __call__(self, x):
        a, b = T.split(self.pw1(self.norm(x)), [x.shape[-1]] * 2, axis=-1)
        y = a * T.sigmoid(b)
        y = T.depthwise_conv1d(y, self.dw, self.dw_b, padding=self.padding)
        return self.pw2(swish(self.mid_norm(y)))


class ConformerBlock(Module):
    def __init__(self, rng, d, heads, kernel, ff_mult=4, padding="edge"):
        self.ff1 = FeedForward(rng, d, ff_mult)
        self.attn = SelfAttention(rng, d, heads)
        self.conv = ConvModule(rng, d, kernel, padding)
        self.ff2 = FeedForward(rng, d, ff_mult)
        self.norm = LayerNorm(d)
        self.width = d

    def __call__(self, x):
        if x.shape[-1] != self.width:
            raise ShapeError("conformer_block", x.shape, detail=f"expected width {self.width}")
        x = x + 0.5 * self.ff1(x)
        x = x + self.attn(x)
        x = x + self.conv(x)
        x = x + 0.5 * self.ff2(x)
        return self.norm(x)


class TAC(Module):
    """Transform-average-concatenate across the channel axis (axis -3 of ``(..., C, T, D)``)."""

    def __init__(self, rng, d, hidden=None):
        hidden = hidden or 3 * d // 2
        self.transform = Linear(rng, d, hidden)
        self.average = Linear(rng, hidden, hidden)
        # concat([z, avg]) @ W written as two products so avg broadcasts over channels
        self.concat_z = Linear(rng, hidden, d)
        self.concat_a = Linear(rng, hidden, d, bias=False)
        self.norm = LayerNorm(d)

    def __call__(self, x, return_mean=False):
        z = T.relu(self.transform(x))
        mean = T.mean(z, axis=-3, keepdims=True)
        avg = T.relu(self.average(mean))
        y = T.relu(self.concat_z(z) + self.concat_a(avg))
        out = self.norm(x + y)
        return (out, mean) if return_mean else out


class MaskNet(Module):
    def __init__(self, config: MaskNetConfig, rng: np.random.Generator):
        config.validate()
        self.config = c = config
        self.inp = Linear(rng, 3 * c.bins, c.width)
        self.inp_norm = LayerNorm(c.width)
        block = lambda: ConformerBlock(rng, c.width, c.heads, c.kernel, c.ff_mult,  # noqa: E731
                                       c.conv_padding)
        # encoder layers split into tac_blocks + 1 nearly equal groups, TAC between them
        bounds = np.linspace(0, c.encoder_layers, c.tac_blocks + 2).round().astype(int)
        self.encoder = [[block() for _ in range(bounds[i + 1] - bounds[i])]
                        for i in range(c.tac_blocks + 1)]
        self.tacs = [TAC(rng, c.width) for _ in range(c.tac_blocks)]
        self.decoder = [block() for _ in range(c.decoder_layers)]
        outputs = 3 * c.bins * (2 if c.variant == "complex" else 1)
        self.head = Linear(rng, c.width, outputs)

    def __call__(self, Y: np.ndarray) -> MaskSet:
        """``Y`` complex ``(B, C, T, F)`` (or ``(C, T, F)``) -> MaskSet with ``(B, 3, T, F)`` masks."""
        Y = np.asarray(Y)
        if Y.ndim == 3:
            Y = Y[None]
        b, ch, t, f = Y.shape
        if f != self.config.bins:
            raise ShapeError("estimate_masks", Y.shape, detail=f"expected {self.config.bins} bins")
        if ch < 1:
            raise ShapeError("estimate_masks", Y.shape, detail="need at least one channel")
        x = self.inp_norm(self.inp(Tensor(input_features(Y, self.config.ipd_ref))))
        for i, group in enumerate(self.encoder):
            for blk in group:
                x = blk(x)
            if i < len(self.tacs):
                x = self.tacs[i](x)
        x = T.mean(x, axis=1)                                   # (B, T, D)
        for blk in self.decoder:
            x = blk(x)
        out = self.head(x)
        if self.config.variant == "real":
            m = T.sigmoid(T.reshape(out, (b, t, 3, f)))
            return MaskSet(T.transpose(m, (0, 2, 1, 3)), "real")
        z = T.transpose(T.reshape(out, (b, t, 2, 3, f)), (2, 0, 3, 1, 4))   # (2, B, 3, T, F)
        re, im = z[0], z[1]
        r = T.sqrt(re * re + im * im + 1e-12)
        scale = 2.0 * T.tanh(0.5 * r) / r
        return MaskSet(CTensor(re * scale, im * scale), "complex")
