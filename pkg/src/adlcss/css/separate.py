"""Long-form streaming separation: windows -> masks -> stitch -> beamform -> overlap-free streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..autodiff.tensor import no_grad
from ..config import RunConfig
from ..signal.stft import istft_array, stft_array
from ..signal.wav import MultichannelWaveform
from .metrics import best_assignment, si_sdr, snr
from .schedule import extract_window, make_schedule, seconds_to_frames
from .stitch import StitchState, stitch


@dataclass
class SeparationResult:
    streams: np.ndarray                 # (2, N) waveforms
    spectra: np.ndarray                 # (2, T, F)
    schedule: object
    permutations: List[tuple] = field(default_factory=list)
    decisions: List[tuple] = field(default_factory=list)
    weights: Optional[np.ndarray] = None   # (2, T, F, C) when recorded
    vad: Optional[np.ndarray] = None       # (2, T) when recorded


def schedule_for(rc: RunConfig, num_frames: int, sample_rate: int):
    c = rc.section("css")
    hop = rc.stft().hop
    return make_schedule(num_frames, seconds_to_frames(c["history"], sample_rate, hop),
                         seconds_to_frames(c["current"], sample_rate, hop),
                         seconds_to_frames(c["future"], sample_rate, hop))


def _permute_masks(masks, perm):
    return masks[:, [perm[0], perm[1], 2]]


def separate_spectrogram(model, Y: np.ndarray, mode: str, rc: RunConfig, sample_rate: int,
                         record: bool = False, schedule=None):
    """Run the chunked pipeline on a ``(C, T, F)`` spectrogram.

    Returns ``(spectra (2, T, F), SeparationResult without waveforms)``.
    """
    Y = np.asarray(Y)
    if Y.ndim != 3 or Y.shape[0] < 1:
        raise ValueError(f"expected (C, T, F) with C >= 1, got shape {Y.shape}")
    c, t, f = Y.shape
    sched = schedule or schedule_for(rc, t, sample_rate)
    css = rc.section("css")
    out = np.zeros((2, t, f), dtype=np.complex128)
    weights = np.zeros((2, t, f, c), dtype=np.complex128) if record else None
    vad = np.ones((2, t)) if record else None
    state = StitchState()
    carry = None
    bf = model.beamformer
    saved_norm = bf.config.normalization
    bf.config.normalization = css["normalization"]
    try:
        with no_grad():
            for ws, s, e, we in sched.chunks:
                window = extract_window(Y, ws, we)[None]                      # (1, C, N, F)
                masks = model.masknet(window).masks
                # stitch on masked channel 0 over the part of the history that exists
                hist = slice(max(0, ws) - ws, s - ws)
                prev = None
                if s > max(0, ws):
                    m = masks.numpy()[0, :2, hist]
                    cur = np.abs(m * window[0, 0, hist][None])
                    prev = np.abs(out[:, max(0, ws):s])
                perm = stitch(state, cur if prev is not None else None, prev)
                masks = _permute_masks(masks, perm)
                if mode == "mask-only":
                    y0 = window[:, :1]
                    est = masks.numpy()[:, :2] * y0
                elif mode == "classical-mvdr":
                    from ..beamformer.classical import classical_mvdr
                    est, h, _ = classical_mvdr(window, masks.numpy())
                    if record:
                        weights[:, s:min(e, t)] = h[0][:, None]
                else:
                    res = bf(window, masks, state=carry, keep=record)
                    est = res["output"].numpy()
                    if css["carry_state"]:
                        # next window starts current frames later; hand over the state just before it
                        idx = sched.current - 1
                        carry = {k: [st.data[:, idx] for st in v] for k, v in res["states"].items()}
                    if record:
                        h = res["h"].numpy()[0]                                # (2, F, N, C)
                        n = min(e, t) - s
                        weights[:, s:s + n] = np.swapaxes(h, 1, 2)[:, s - ws:s - ws + n]
                        if res.get("vad") is not None:
                            vad[:, s:s + n] = res["vad"].data[0, :, 0, s - ws:s - ws + n]
                n = min(e, t) - s
                out[:, s:s + n] = est[0, :, s - ws:s - ws + n]
    finally:
        bf.config.normalization = saved_norm
    result = SeparationResult(np.zeros((2, 0)), out, sched, state.history, state.decisions,
                              weights, vad)
    return out, result


def separate(model, wf: MultichannelWaveform, mode: str, rc: RunConfig,
             record: bool = False) -> SeparationResult:
    if wf.channels < 1:
        raise ValueError("recording has no channels")
    cfg = rc.stft()
    Y = stft_array(wf.samples, cfg)
    spectra, result = separate_spectrogram(model, Y, mode, rc, wf.sample_rate, record)
    result.streams = istft_array(spectra, cfg, wf.num_samples)
    return result


def evaluate(model, examples, mode: str, rc: RunConfig) -> List[dict]:
    """Per-mixture SI-SDR / SNR of the separated streams and of the unprocessed channel 0."""
    rows = []
    for ex in examples:
        wf = MultichannelWaveform(ex.mixture, ex.sample_rate)
        res = separate(model, wf, mode, rc)
        refs = [r for r in ex.references]
        score, perm, _ = best_assignment(list(res.streams), refs, si_sdr)
        base, _, _ = best_assignment([ex.mixture[0], ex.mixture[0]], refs, si_sdr)
        snr_score = float(np.mean([snr(res.streams[perm[i]], r) for i, r in enumerate(refs) if np.any(r)]))
        rows.append({"id": ex.id, "mode": mode, "si_sdr": score, "si_sdr_mixture": base,
                     "si_sdr_improvement": score - base, "snr": snr_score})
    return rows
