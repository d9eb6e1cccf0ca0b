"""Recurrent replacements for steering estimation, matrix inversion and voice activity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..autodiff import ops as T
from ..autodiff.cplx import CTensor, matmul as cmatmul, mul, mul_conj, reciprocal
from ..autodiff.nn import GRU, Linear, Module
from ..autodiff.tensor import Tensor
from .covariance import framewise_covariances, interference_mask

WEIGHT_EPS = 1e-8


@dataclass
class BeamformerConfig:
    channels: int = 7
    v_hidden: Sequence[int] = (200, 100)
    vv_hidden: Sequence[int] = (200, 200)
    vad_hidden: Sequence[int] = (200, 200)
    norm_v: bool = True
    psd: bool = True
    vad: bool = True
    residual: bool = True
    alpha: float = 0.5
    vad_cap: Optional[float] = None
    normalization: str = "chunk"       # chunk | running
    input_mode: str = "trace-log"      # raw | trace-log
    init: str = "pass-through"         # pass-through | random

    def validate(self):
        if self.channels < 1:
            raise ValueError("beamformer needs at least one channel")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.input_mode not in ("raw", "trace-log"):
            raise ValueError(f"unknown input_mode {self.input_mode!r}")
        if self.init not in ("pass-through", "random"):
            raise ValueError(f"unknown beamformer init {self.init!r}")

    @property
    def cov_features(self) -> int:
        return 2 * self.channels ** 2 + (1 if self.input_mode == "trace-log" else 0)

    @property
    def vv_outputs(self) -> int:
        c = self.channels
        return c * c + c if self.psd else 2 * c * c


class GRUNet(Module):
    """Stacked GRUs over ``(lanes, T, I)`` followed by a linear layer."""

    def __init__(self, rng, d_in: int, hidden: Sequence[int], d_out: int):
        dims = [d_in] + list(hidden)
        self.grus = [GRU(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        self.head = Linear(rng, dims[-1], d_out)

    def __call__(self, x: Tensor, h0: Optional[list] = None):
        """Returns ``(output (lanes, T, d_out), [per-layer states (lanes, T, H)])``."""
        states = []
        for i, gru in enumerate(self.grus):
            init = None if h0 is None else Tensor(h0[i])
            x = gru(x, init)
            states.append(x)
        return self.head(x), states


def upper_triangular_index(c: int) -> tuple:
    """Gather indices placing ``c(c+1)/2`` packed values into a ``c x c`` upper triangle.

    Index ``c(c+1)/2`` (one past the packed values) marks the zero lower triangle.
    """
    rows, cols = np.triu_indices(c)
    idx = np.full((c, c), len(rows), dtype=np.int64)
    idx[rows, cols] = np.arange(len(rows))
    return idx


def covariance_features(phi: CTensor, mode: str) -> Tensor:
    """``(..., C, C)`` complex -> ``(..., 2C^2 [+1])`` reals."""
    lead = phi.shape[:-2]
    c = phi.shape[-1]
    re = T.reshape(phi.re, lead + (c * c,))
    im = T.reshape(phi.im, lead + (c * c,))
    if mode == "raw":
        return T.concat([re, im], axis=-1)
    tr = T.sum_(re[..., ::c + 1], axis=-1, keepdims=True)
    inv = 1.0 / (tr + 1e-10)
    return T.concat([re * inv, im * inv, 0.1 * T.log(tr + 1e-10)], axis=-1)


def normalize_steering(v: CTensor, eps: float = 1e-12) -> CTensor:
    n = T.sqrt(T.sum_(v.abs2(), axis=-1, keepdims=True) + eps)
    return CTensor(v.re / n, v.im / n)


def adl_weights(inv: CTensor, v: CTensor, eps: float = WEIGHT_EPS) -> CTensor:
    """``h = inv v / (v^H inv v)`` per frame; ``inv`` ``(..., C, C)``, ``v`` ``(..., C)``."""
    col = CTensor(T.expand_dims(v.re, -1), T.expand_dims(v.im, -1))
    num = cmatmul(inv, col)
    num = CTensor(num.re[..., 0], num.im[..., 0])
    den = mul_conj(v, num).sum(axis=-1, keepdims=True)
    return num * reciprocal(den, eps)


def apply_weights(h: CTensor, Y: CTensor) -> CTensor:
    """``h^H y`` over the last axis."""
    return mul_conj(h, Y).sum(axis=-1)


class ADLBeamformer(Module):
    """Frame-wise neural MVDR for two speakers with optional VAD gate and residual path.

    Lanes for the covariance nets are ``(batch, speaker, frequency)`` triples with
    parameters shared over frequency; the VAD net runs one lane per
    ``(batch, speaker)`` on the speaker's mask row.
    """

    def __init__(self, config: BeamformerConfig, bins: int, rng: np.random.Generator):
        config.validate()
        self.config = c = config
        self.bins = bins
        self.net_v = GRUNet(rng, c.cov_features, c.v_hidden, 2 * c.channels)
        self.net_vv = GRUNet(rng, c.cov_features, c.vv_hidden, c.vv_outputs)
        self.net_vad = GRUNet(rng, bins, c.vad_hidden, 1)
        # start the gate open so the ReLU output is not stuck at zero
        self.net_vad.head.b.data[:] = 1.0
        self._tri = upper_triangular_index(c.channels)
        if c.init == "pass-through":
            self._pass_through()

    def _pass_through(self, scale: float = 0.1, gate: float = 0.1):
        """Bias the heads towards ``v = e0`` and an identity inverse so ``h`` starts near ``e0``.

        The VAD gate starts small but open: with ``h`` near ``e0`` a wide-open gate
        adds the whole mixture, and the first updates would close it for good.
        """
        c = self.config.channels
        for head in (self.net_v.head, self.net_vv.head, self.net_vad.head):
            head.w.data *= scale
        self.net_vad.head.b.data[:] = gate
        self.net_v.head.b.data[0] = 1.0
        if self.config.psd:
            rows, cols = np.triu_indices(c)
            self.net_vv.head.b.data[np.flatnonzero(rows == cols)] = 1.0
        else:
            self.net_vv.head.b.data[np.arange(c) * (c + 1)] = 1.0

    def inverse_from_output(self, out: Tensor) -> CTensor:
        c = self.config.channels
        lead = out.shape[:-1]
        if not self.config.psd:
            return CTensor(T.reshape(out[..., :c * c], lead + (c, c)),
                           T.reshape(out[..., c * c:], lead + (c, c)))
        n = c * (c + 1) // 2
        pad = Tensor(np.zeros(lead + (1,)))
        re = T.concat([out[..., :n], pad], axis=-1)[..., self._tri]
        im = T.concat([out[..., n:], pad], axis=-1)[..., self._tri]
        U = CTensor(re, im)
        Uh = CTensor(T.swapaxes(re, -1, -2), T.neg(T.swapaxes(im, -1, -2)))
        return cmatmul(U, Uh)

    def __call__(self, Y: np.ndarray, masks, state: Optional[dict] = None, keep: bool = False):
        """Beamform both speakers.

        ``Y`` complex ``(B, C, T, F)``; ``masks`` ``(B, 3, T, F)`` Tensor/CTensor.
        ``state`` optionally holds initial GRU states per net (``{"v": [...], ...}``).
        Returns a dict with ``"output"`` CTensor ``(B, 2, T, F)`` and ``"states"``;
        with ``keep=True`` also ``h``, ``vad`` and the inverse covariances.
        """
        cfg = self.config
        Y = np.asarray(Y)
        b, ch, t, f = Y.shape
        if ch != cfg.channels:
            raise ValueError(f"beamformer built for {cfg.channels} channels, got {ch}")
        lanes = b * 2 * f
        Yl = CTensor.from_numpy(np.ascontiguousarray(Y.transpose(0, 3, 2, 1))[:, None])  # (B,1,F,T,C)

        def lane_major(m):                                # (B, T, F) -> (B, 1, F, T)
            return T.expand_dims(T.swapaxes(m, -1, -2), 1)

        def stack_k(get):
            parts = [get(k) for k in range(2)]
            if isinstance(parts[0], CTensor):
                return CTensor(T.concat([lane_major(p.re) for p in parts], 1),
                               T.concat([lane_major(p.im) for p in parts], 1))
            return T.concat([lane_major(p) for p in parts], 1)

        ms = stack_k(lambda k: masks[:, k])                           # (B, 2, F, T)
        mv = stack_k(lambda k: interference_mask(masks, k))
        phi_ss = framewise_covariances(Yl, ms, cfg.normalization)      # (B, 2, F, T, C, C)
        phi_vv = framewise_covariances(Yl, mv, cfg.normalization)
        st = state or {}
        xs = T.reshape(covariance_features(phi_ss, cfg.input_mode), (lanes, t, cfg.cov_features))
        xv = T.reshape(covariance_features(phi_vv, cfg.input_mode), (lanes, t, cfg.cov_features))
        v_out, v_states = self.net_v(xs, st.get("v"))
        vv_out, vv_states = self.net_vv(xv, st.get("vv"))
        shape5 = (b, 2, f, t)
        v = CTensor(T.reshape(v_out[..., :ch], shape5 + (ch,)), T.reshape(v_out[..., ch:], shape5 + (ch,)))
        if cfg.norm_v:
            v = normalize_steering(v)
        inv = self.inverse_from_output(T.reshape(vv_out, shape5 + (cfg.vv_outputs,)))
        h = adl_weights(inv, v)
        out = apply_weights(h, Yl)                                     # (B, 2, F, T)
        result = {"states": {"v": v_states, "vv": vv_states}}
        wv = None
        if cfg.vad:
            mag = ms.abs(1e-12) if isinstance(ms, CTensor) else ms
            row = T.reshape(T.swapaxes(mag, -1, -2), (b * 2, t, f))    # F-dim mask row per frame
            vad_out, vad_states = self.net_vad(row, st.get("vad"))
            wv = T.relu(T.reshape(vad_out, (b, 2, 1, t)))
            if cfg.vad_cap is not None:
                wv = T.minimum(wv, Tensor(np.full(wv.shape, cfg.vad_cap)))
            out = vad_gate(out, wv)
            result["states"]["vad"] = vad_states
        if cfg.residual:
            y0 = CTensor(Yl.re[..., 0], Yl.im[..., 0])                 # (B, 1, F, T)
            out = residual_mix(out, masked_scalar(y0, ms), cfg.alpha)
        result["output"] = CTensor(T.swapaxes(out.re, -1, -2), T.swapaxes(out.im, -1, -2))
        if keep:
            result.update(h=h, vad=wv, inverse=inv, steering=v)
        return result


def vad_gate(s: CTensor, w) -> CTensor:
    """Scale each frame by the non-negative gate ``w`` (broadcast over frequency)."""
    return s * w


def residual_mix(s_vad: CTensor, s_mask: CTensor, alpha: float = 0.5) -> CTensor:
    return s_vad + s_mask * alpha


def masked_scalar(y: CTensor, mask) -> CTensor:
    if isinstance(mask, CTensor):
        return mul(mask, y)
    return y * mask
