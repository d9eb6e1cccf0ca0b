import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adlcss.autodiff import Tensor, no_grad
from adlcss.css import (IDENTITY, SWAP, SeparationModel, StitchState, choose_permutation, compose,
                        evaluate, extract_window, make_schedule, pit_loss, seconds_to_frames,
                        separate, separate_spectrogram, si_sdr, snr, stitch)
from adlcss.css.data import load_examples, make_batch, remix_batch
from adlcss.css.train import TrainingError, load_model, train
from adlcss.masknet import MaskSet
from adlcss.signal import stft_array
from adlcss.signal.wav import MultichannelWaveform
from helpers import random_recording, tiny_config


# schedule ---------------------------------------------------------------------

def test_default_frame_counts():
    assert [seconds_to_frames(s, 16000, 256) for s in (1.2, 0.8, 0.4)] == [75, 50, 25]


def test_ten_chunks():
    s = make_schedule(500, 75, 50, 25)
    assert len(s) == 10
    assert s.window == 150
    assert s.chunks[0] == (-75, 0, 50, 75)


def test_short_recording_single_chunk():
    s = make_schedule(30, 75, 50, 25)
    assert len(s) == 1
    w = extract_window(np.ones((2, 30, 4)), *s.chunks[0][::3])
    assert w.shape == (2, 150, 4)
    assert w[:, :75].sum() == 0 and w[:, 105:].sum() == 0 and np.all(w[:, 75:105] == 1)


def test_empty_recording():
    assert len(make_schedule(0, 75, 50, 25)) == 0


def test_current_must_be_positive():
    with pytest.raises(ValueError):
        make_schedule(10, 1, 0, 1)


@given(st.integers(0, 400), st.integers(0, 20), st.integers(1, 30), st.integers(0, 20))
def test_current_windows_tile(total, h, c, f):
    s = make_schedule(total, h, c, f)
    np.testing.assert_array_equal(s.current_frames(), np.arange(total))


# stitching --------------------------------------------------------------------

def test_identity_when_unchanged():
    rng = np.random.default_rng(0)
    prev = rng.random((2, 10, 6))
    state = StitchState()
    assert stitch(state, prev.copy(), prev) == IDENTITY


def test_swap_detected():
    rng = np.random.default_rng(1)
    prev = rng.random((2, 10, 6))
    state = StitchState()
    assert stitch(state, prev[::-1].copy(), prev) == SWAP
    assert state.decisions == [SWAP]


def test_tie_keeps_previous():
    z = np.zeros((2, 4, 3))
    assert choose_permutation(z, z, SWAP) == SWAP


def test_first_chunk_keeps_prior():
    state = StitchState()
    assert stitch(state, None, None) == IDENTITY


def test_alternating_sinusoids_four_chunks():
    # each chunk holds two tones, the separator returns them in alternating order
    f = 16
    tone = [np.zeros(f), np.zeros(f)]
    tone[0][3], tone[1][11] = 1.0, 1.0
    state = StitchState()
    out = [[], []]
    previous = None
    for n in range(4):
        order = (0, 1) if n % 2 == 0 else (1, 0)
        chunk = np.stack([np.tile(tone[order[0]], (5, 1)), np.tile(tone[order[1]], (5, 1))])
        perm = stitch(state, chunk, previous)
        aligned = chunk[list(perm)]
        for j in range(2):
            out[j].append(aligned[j])
        previous = aligned
    for j in range(2):
        stream = np.concatenate(out[j])
        assert np.count_nonzero(stream.sum(axis=0)) == 1
    assert state.history == [IDENTITY, SWAP, IDENTITY, SWAP]


@given(st.lists(st.sampled_from([IDENTITY, SWAP]), min_size=1, max_size=12))
def test_cumulative_equals_composition(decisions):
    rng = np.random.default_rng(2)
    base = rng.random((2, 6, 5))
    state = StitchState()
    stitch(state, None, None)
    previous = base
    truth = IDENTITY
    for d in decisions:
        truth = compose(truth, d)
        # chunk streams arrive permuted by the inverse of the true cumulative map
        chunk = np.empty_like(base)
        for j in range(2):
            chunk[truth[j]] = base[j]
        perm = stitch(state, chunk, previous)
        assert perm == truth
    acc = IDENTITY
    for r in state.decisions:
        acc = compose(acc, r)
    assert acc == state.permutation


# losses -----------------------------------------------------------------------

def test_pit_zero_in_order_and_swapped():
    rng = np.random.default_rng(3)
    r = [rng.random((2, 5, 4)), rng.random((2, 5, 4))]
    assert float(pit_loss([Tensor(r[0]), Tensor(r[1])], r).data) == 0.0
    assert float(pit_loss([Tensor(r[1]), Tensor(r[0])], r).data) == 0.0


def test_pit_hand_enumeration():
    est = [Tensor(np.array([[1.0]])), Tensor(np.array([[0.0]]))]
    ref = [np.array([[0.0]]), np.array([[2.0]])]
    # identity: 0.5 * (1 + 4) = 2.5 ; swap: 0.5 * (1 + 0) = 0.5
    assert float(pit_loss(est, ref).data) == pytest.approx(0.5)


def test_pit_uses_magnitudes_of_complex_inputs():
    rng = np.random.default_rng(4)
    r = rng.normal(size=(2, 1, 3, 4)) + 1j * rng.normal(size=(2, 1, 3, 4))
    e = [Tensor(np.abs(r[0])), Tensor(np.abs(r[1]))]
    assert float(pit_loss(e, [r[0], r[1]]).data) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31))
def test_pit_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    e = [rng.normal(size=(2, 4, 3)) for _ in range(2)]
    r = [rng.normal(size=(2, 4, 3)) for _ in range(2)]
    for kind in ("magnitude",):
        a = pit_loss([Tensor(e[0]), Tensor(e[1])], r, kind).data
        b = pit_loss([Tensor(e[1]), Tensor(e[0])], r, kind).data
        assert a == b


def test_log_mel_loss_runs_and_is_zero_on_match():
    from adlcss.signal.mel import MelFilterbank
    bank = MelFilterbank.create(8000, 64, 10)
    r = [np.random.default_rng(5).random((1, 4, 33)) for _ in range(2)]
    assert float(pit_loss([Tensor(r[0]), Tensor(r[1])], r, "log-mel", bank).data) == 0.0
    with pytest.raises(ValueError):
        pit_loss([Tensor(r[0]), Tensor(r[1])], r, "log-mel")


# metrics ----------------------------------------------------------------------

def test_si_sdr_identities():
    rng = np.random.default_rng(6)
    s = rng.normal(size=4000)
    assert si_sdr(s, s) == 60.0
    assert si_sdr(2 * s, s) == 60.0


def test_si_sdr_orthogonal_noise_ten_db():
    rng = np.random.default_rng(7)
    s = rng.normal(size=8000)
    n = rng.normal(size=8000)
    n -= np.dot(n, s) / np.dot(s, s) * s
    n *= math.sqrt(np.dot(s, s) / np.dot(n, n) / 10.0)
    assert si_sdr(s + n, s) == pytest.approx(10.0, abs=0.1)
    assert snr(s + n, s) == pytest.approx(10.0, abs=0.1)


def test_metrics_reject_zero_reference():
    with pytest.raises(ValueError):
        si_sdr(np.ones(10), np.zeros(10))
    with pytest.raises(ValueError):
        snr(np.ones(10), np.zeros(10))


# training ---------------------------------------------------------------------

def test_frozen_joint_phase_is_constant(tiny_dataset, tmp_path):
    rc = tiny_config(train__phase="joint", train__trainable="none", train__joint_epochs=3,
                     train__segment_seconds=0.0, train__checkpoint_every_epoch=False)
    model = SeparationModel(rc, np.random.default_rng(0))
    ex = load_examples(tiny_dataset, rc.stft(), 3)[:2]
    res = train(model, ex, rc, tmp_path)
    assert len(res.losses) == 3
    assert len(set(res.losses)) == 1


def test_training_is_deterministic(tiny_dataset, tmp_path):
    rc = tiny_config(train__pretrain_epochs=1, train__joint_epochs=1)
    ex = load_examples(tiny_dataset, rc.stft(), 3)
    curves = []
    for run in range(2):
        model = SeparationModel(rc, np.random.default_rng(9))
        res = train(model, ex, rc, tmp_path / str(run), seed=3)
        curves.append(res.losses)
        assert res.phases == ["pretrain"] * 2 + ["joint"] * 2
        assert (tmp_path / str(run) / "pretrain_epoch001.adlb").exists()
        assert (tmp_path / str(run) / "joint_epoch001.adlb").exists()
    assert curves[0] == curves[1]
    a = (tmp_path / "0" / "final.adlb").read_bytes()
    assert a == (tmp_path / "1" / "final.adlb").read_bytes()


def test_training_reduces_loss(tiny_dataset, tmp_path):
    rc = tiny_config(train__phase="pretrain", train__pretrain_epochs=15, train__peak_lr=3e-3,
                     train__checkpoint_every_epoch=False)
    ex = load_examples(tiny_dataset, rc.stft(), 3)[:2]
    model = SeparationModel(rc, np.random.default_rng(0))
    res = train(model, ex, rc, tmp_path, seed=1)
    assert np.mean(res.losses[-3:]) < np.mean(res.losses[:3])


def test_non_finite_loss_aborts(tiny_dataset, tmp_path):
    rc = tiny_config(train__phase="pretrain", train__pretrain_epochs=2)
    ex = load_examples(tiny_dataset, rc.stft(), 3)[:2]
    ex[1].R = ex[1].R * np.nan
    model = SeparationModel(rc, np.random.default_rng(0))
    before = model.state_dict()
    with pytest.raises(TrainingError, match="non-finite"):
        train(model, ex, rc, tmp_path, seed=0)
    kept, _, meta = load_model(tmp_path / "last_good.adlb")
    assert meta["aborted"] is True
    saved = kept.state_dict()
    assert saved.keys() == before.keys()
    assert all(np.isfinite(v).all() for v in saved.values())


def test_checkpoint_roundtrip_preserves_outputs(tmp_path):
    from adlcss.css.train import save_model
    rc = tiny_config()
    model = SeparationModel(rc, np.random.default_rng(1))
    save_model(model, tmp_path / "m.adlb", rc)
    again, rc2, _ = load_model(tmp_path / "m.adlb")
    assert rc2.to_dict() == rc.to_dict()
    Y = stft_array(random_recording(np.random.default_rng(2), 3, 0.2), rc.stft())
    with no_grad():
        a = model(Y)["estimates"].numpy()
        b = again(Y)["estimates"].numpy()
    np.testing.assert_array_equal(a, b)


def test_batch_crop_keeps_alignment(tiny_dataset):
    rc = tiny_config()
    ex = load_examples(tiny_dataset, rc.stft(), 3)
    Y, R = make_batch(ex[:2], np.random.default_rng(0), 10)
    assert Y.shape[:3] == (2, 3, 10) and R.shape[:3] == (2, 2, 10)


def test_components_sum_to_mixture(tiny_dataset):
    rc = tiny_config()
    for e in load_examples(tiny_dataset, rc.stft(), 3, components=True):
        assert e.components.shape == (3,) + e.Y.shape
        scale = np.max(np.abs(e.Y))
        assert np.max(np.abs(e.components.sum(0) - e.Y)) < 1e-5 * scale
        assert np.max(np.abs(e.components[:2, 0] - e.R)) < 1e-5 * scale


def test_remix_batch(tiny_dataset):
    rc = tiny_config()
    ex = load_examples(tiny_dataset, rc.stft(), 3, components=True)
    Y, R = remix_batch(ex, np.random.default_rng(4), 5, 12, single_prob=0.0)
    assert Y.shape == (5, 3, 12, Y.shape[-1]) and R.shape == (5, 2, 12, Y.shape[-1])
    again = remix_batch(ex, np.random.default_rng(4), 5, 12, single_prob=0.0)
    assert np.array_equal(Y, again[0]) and np.array_equal(R, again[1])
    e = np.sum(np.abs(R) ** 2, axis=(2, 3))
    live = np.all(e > 0, axis=1)
    ser = 10 * np.log10(e[live, 0] / e[live, 1])
    assert np.all(np.abs(ser) <= 5.0 + 1e-6)
    _, R1 = remix_batch(ex, np.random.default_rng(4), 3, 12, single_prob=1.0)
    assert not np.any(R1[:, 1])


def test_remix_needs_components(tiny_dataset):
    rc = tiny_config()
    with pytest.raises(ValueError, match="components"):
        remix_batch(load_examples(tiny_dataset, rc.stft(), 3), np.random.default_rng(0), 2)


def test_dynamic_mix_training(tiny_dataset, tmp_path):
    rc = tiny_config(train__phase="pretrain", train__pretrain_epochs=2, train__dynamic_mix=True,
                     train__checkpoint_every_epoch=False)
    ex = load_examples(tiny_dataset, rc.stft(), 3, components=True)
    res = train(SeparationModel(rc, np.random.default_rng(0)), ex, rc, tmp_path, seed=0)
    assert len(res.losses) == 4 and np.all(np.isfinite(res.losses))


# separation -------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["mask-only", "classical-mvdr", "adl-mvdr"])
def test_separate_preserves_length(mode):
    rc = tiny_config()
    model = SeparationModel(rc, np.random.default_rng(0))
    x = random_recording(np.random.default_rng(1), 3, 0.37)
    res = separate(model, MultichannelWaveform(x, 8000), mode, rc)
    assert res.streams.shape == (2, x.shape[1])
    assert np.isfinite(res.streams).all()
    assert len(res.permutations) == len(res.schedule)


def test_mask_only_is_masked_reference():
    # with one chunk covering the recording, mask-only equals masks times channel 0
    rc = tiny_config(css__history=0.0, css__current=1.0, css__future=0.0)
    model = SeparationModel(rc, np.random.default_rng(0))
    Y = stft_array(random_recording(np.random.default_rng(3), 3, 0.3), rc.stft())
    spectra, res = separate_spectrogram(model, Y, "mask-only", rc, 8000)
    with no_grad():
        m = model.masknet(extract_window(Y, 0, res.schedule.window)[None]).numpy()[0]
    t = Y.shape[1]
    np.testing.assert_allclose(spectra, m[:2, :t] * Y[0][None], rtol=0, atol=1e-12)


def test_separate_rejects_empty_recording():
    rc = tiny_config()
    model = SeparationModel(rc, np.random.default_rng(0))
    with pytest.raises(ValueError):
        separate(model, MultichannelWaveform(np.zeros((0, 100)), 8000), "adl-mvdr", rc)


def test_toggles_change_adl_output():
    rng = np.random.default_rng(4)
    x = random_recording(rng, 3, 0.3)
    outs = {}
    for name, rc in (("full", tiny_config()), ("sys2", tiny_config(model__vad=False, model__residual=False,
                                                                   model__norm_v=False))):
        model = SeparationModel(rc, np.random.default_rng(0))
        outs[name] = separate(model, MultichannelWaveform(x, 8000), "adl-mvdr", rc).streams
    assert not np.allclose(outs["full"], outs["sys2"])


def test_record_weights_shapes():
    rc = tiny_config()
    model = SeparationModel(rc, np.random.default_rng(0))
    x = random_recording(np.random.default_rng(5), 3, 0.3)
    res = separate(model, MultichannelWaveform(x, 8000), "adl-mvdr", rc, record=True)
    t = res.spectra.shape[1]
    assert res.weights.shape == (2, t, 33, 3)
    assert res.vad.shape == (2, t) and np.all(res.vad >= 0)


class BandOracle:
    """Stands in for the mask network: ideal band masks, speaker order flipped every other call."""

    def __init__(self, split, bins):
        low = (np.arange(bins) < split).astype(float)
        self.bands = np.stack([low, 1 - low])
        self.calls = 0

    def __call__(self, window):
        b, c, t, f = window.shape
        order = [0, 1] if self.calls % 2 == 0 else [1, 0]
        self.calls += 1
        m = np.zeros((b, 3, t, f))
        m[:, 0] = self.bands[order[0]]
        m[:, 1] = self.bands[order[1]]
        return MaskSet(Tensor(m), "real")


def test_stitching_recovers_alternating_band_speakers():
    rc = tiny_config()
    model = SeparationModel(rc, np.random.default_rng(0))
    model.masknet = BandOracle(16, 33)
    sr, n = 8000, 8000
    t = np.arange(n) / sr
    gate_a = (np.floor(t / 0.15) % 2 == 0) | (t > 0.7)
    src = [np.sin(2 * np.pi * 700 * t) * gate_a, np.sin(2 * np.pi * 3100 * t) * ((t > 0.1) & (t < 0.9))]
    x = np.tile(src[0] + src[1], (3, 1))
    res = separate(model, MultichannelWaveform(x, sr), "mask-only", rc)
    assert SWAP in res.decisions
    S = stft_array(res.streams, rc.stft())
    e = np.abs(S) ** 2
    per_speaker = np.stack([e[:, :, :16].sum(axis=(1, 2)), e[:, :, 16:].sum(axis=(1, 2))])  # (spk, stream)
    share = per_speaker / per_speaker.sum(axis=1, keepdims=True)
    assert share.max(axis=1).min() >= 0.95
    assert share.argmax(axis=1).tolist() in ([0, 1], [1, 0])


def test_evaluate_rows(tiny_dataset):
    rc = tiny_config()
    model = SeparationModel(rc, np.random.default_rng(0))
    ex = load_examples(tiny_dataset, rc.stft(), 3)
    rows = evaluate(model, ex, "mask-only", rc)
    assert [r["id"] for r in rows] == [e.id for e in ex]
    for r in rows:
        assert r["si_sdr_improvement"] == pytest.approx(r["si_sdr"] - r["si_sdr_mixture"])
