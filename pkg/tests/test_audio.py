import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectanim.audio import (
    LOG_FLOOR,
    AudioClip,
    FrontendConfig,
    Normalizer,
    apply_zscore,
    extract_mfsc,
    fit_zscore,
    mel_filterbank,
    read_wav,
    spectral_images,
    spectral_window,
    write_wav,
)


def _mel(f):
    # written out independently of the package helpers
    return 2595.0 * math.log10(1.0 + f / 700.0)


def _inv_mel(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def test_one_second_gives_100_frames():
    rng = np.random.default_rng(0)
    feats = extract_mfsc(AudioClip(rng.uniform(-0.5, 0.5, 16000), 16000))
    assert feats.shape == (100, 40)
    assert np.all(np.isfinite(feats))


def test_one_second_at_44k_gives_100_frames():
    t = np.arange(44100) / 44100
    feats = extract_mfsc(AudioClip(0.3 * np.sin(2 * np.pi * 300 * t), 44100))
    assert feats.shape == (100, 40)


@pytest.mark.parametrize("n", [400, 401, 555, 1600, 16000, 23999])
def test_frame_count_rule(n):
    cfg = FrontendConfig()
    feats = extract_mfsc(AudioClip(np.full(n, 0.1), 16000), cfg)
    # the signal is tail padded by win - hop samples before framing
    padded = n + cfg.win_length - cfg.hop_length
    assert len(feats) == (padded - cfg.win_length) // cfg.hop_length + 1 == n // cfg.hop_length


def test_silence_hits_log_floor():
    feats = extract_mfsc(AudioClip(np.zeros(8000), 16000))
    assert np.all(feats == np.log(LOG_FLOOR))


def test_sine_peaks_in_nearest_band():
    cfg = FrontendConfig()
    t = np.arange(16000) / 16000
    feats = extract_mfsc(AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), 16000), cfg)
    lo, hi = _mel(0.0), _mel(8000.0)
    step = (hi - lo) / (cfg.n_mels + 1)
    centres = [_inv_mel(lo + step * (i + 1)) for i in range(cfg.n_mels)]
    expected = min(range(cfg.n_mels), key=lambda i: abs(centres[i] - 1000.0))
    mid = feats[10:-10]
    assert np.all(np.argmax(mid, axis=1) == expected)


def test_filterbank_covers_band():
    cfg = FrontendConfig()
    fb = mel_filterbank(cfg)
    assert fb.shape == (40, 257)
    assert np.all(fb >= 0)
    freqs = np.arange(257) * 16000 / 512
    inner = (freqs > 0) & (freqs < 8000)
    assert np.all(fb[:, inner].sum(axis=0) > 0)


def test_deterministic():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, 5000)
    a = extract_mfsc(AudioClip(x, 16000))
    b = extract_mfsc(AudioClip(x.copy(), 16000))
    assert a.tobytes() == b.tobytes()


def test_errors():
    with pytest.raises(ValueError):
        extract_mfsc(AudioClip(np.zeros(0), 16000))
    with pytest.raises(ValueError):
        extract_mfsc(AudioClip(np.zeros(8000), 8000))
    with pytest.raises(ValueError):
        extract_mfsc(AudioClip(np.zeros(1600), 16000), FrontendConfig(frame_rate=50))
    with pytest.raises(ValueError):
        AudioClip(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(3), 0)


def test_wav_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    clip = AudioClip(rng.uniform(-0.9, 0.9, 1234), 22050)
    write_wav(tmp_path / "a.wav", clip)
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == 22050
    assert np.max(np.abs(back.samples - clip.samples)) < 1 / 16000


def test_stereo_wav_is_averaged(tmp_path):
    import wave

    left = np.array([1000, -2000, 3000], dtype="<i2")
    right = np.array([3000, 2000, -1000], dtype="<i2")
    with wave.open(str(tmp_path / "s.wav"), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(16000)
        wf.writeframes(np.stack([left, right], axis=1).tobytes())
    clip = read_wav(tmp_path / "s.wav")
    assert np.allclose(clip.samples, (left + right.astype(float)) / 2 / 32768)


def test_zscore_constant_dimension():
    seq = np.random.default_rng(0).normal(size=(50, 40))
    seq[:, 7] = 5.0
    out = apply_zscore(seq, fit_zscore([seq]))
    assert np.all(out[:, 7] == 0.0)


def test_zscore_statistics():
    rng = np.random.default_rng(2)
    seqs = [rng.normal(3, 2, size=(n, 40)) for n in (30, 45, 12)]
    norm = fit_zscore(seqs)
    out = np.concatenate([norm.apply(s) for s in seqs])
    assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(out.std(axis=0) - 1) < 1e-9)


def test_zscore_two_frames():
    seq = np.zeros((2, 40))
    seq[:, 0] = [0.0, 2.0]
    out = fit_zscore([seq]).apply(seq)
    assert np.allclose(out[:, 0], [-1.0, 1.0])


def test_zscore_needs_two_frames():
    with pytest.raises(ValueError):
        fit_zscore([np.zeros((1, 40))])


def test_zscore_invert_and_json():
    rng = np.random.default_rng(4)
    seq = rng.normal(size=(20, 40)) * 4 + 1
    norm = fit_zscore([seq])
    assert np.max(np.abs(norm.invert(norm.apply(seq)) - seq)) < 1e-9
    back = Normalizer.from_json(norm.to_json())
    assert np.array_equal(back.mean, norm.mean) and np.array_equal(back.std, norm.std)


def test_spectral_window_interior():
    seq = np.arange(30 * 40, dtype=float).reshape(30, 40)
    img = spectral_window(seq, 12, 15)
    assert img.shape == (40, 15)
    for c in range(15):
        assert np.array_equal(img[:, c], seq[12 - 7 + c])


def test_spectral_window_ka1_and_padding():
    seq = np.random.default_rng(0).normal(size=(6, 40))
    assert np.array_equal(spectral_window(seq, 3, 1)[:, 0], seq[3])
    img = spectral_window(seq, 0, 5)
    for c, j in enumerate([0, 0, 0, 1, 2]):
        assert np.array_equal(img[:, c], seq[j])


@pytest.mark.parametrize("ka", [0, 4, -3])
def test_spectral_window_bad_ka(ka):
    with pytest.raises(ValueError):
        spectral_window(np.zeros((5, 40)), 0, ka)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), half=st.integers(0, 8))
def test_spectral_images_match_windows(n, half):
    ka = 2 * half + 1
    seq = np.random.default_rng(n).normal(size=(n, 40))
    imgs = spectral_images(seq, ka)
    assert imgs.shape == (n, 40, ka, 1)
    for j in range(n):
        win = spectral_window(seq, j, ka)
        assert np.array_equal(imgs[j, :, :, 0], win)
        # the centre column is the frame itself
        assert np.array_equal(win[:, half], seq[j])
