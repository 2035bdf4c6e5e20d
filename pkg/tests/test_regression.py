import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectanim.audio import spectral_images
from affectanim.emotion import UtteranceDecision, decide
from affectanim.nn import build_dsrn
from affectanim.regression import (
    DsrnBank,
    animate,
    contributor_counts,
    fuse_estimate,
    fuse_estimates,
    overlap_average,
    render_svg_frames,
    write_track_csv,
    write_track_json,
)
from affectanim.shape import fit_shape_model, read_landmarks_csv, write_landmarks_csv

from test_shape import random_faces


class Const:
    def __init__(self, value, width=90):
        self.value = np.full(width, float(value)) if np.isscalar(value) else np.asarray(value, float)
        self.calls = 0

    def predict(self, images):
        self.calls += 1
        return np.tile(self.value, (len(images), 1))


class Linear:
    def __init__(self, w):
        self.w = w

    def predict(self, images):
        return images.reshape(len(images), -1) @ self.w


def decision(e1, e2, p1):
    return UtteranceDecision(e1, e2, p1, 1.0 - p1)


def brute_overlap(est, kv):
    n = len(est)
    d = est.shape[1] // kv
    half = kv // 2
    out = np.zeros((n, d))
    for j in range(n):
        acc, cnt = np.zeros(d), 0
        for i in range(n):
            for k in range(kv):
                if i + k - half == j:
                    acc += est[i, k * d : (k + 1) * d]
                    cnt += 1
        out[j] = acc / cnt
    return out


def test_fusion_constant_models():
    a, b = 1.25, -3.5
    bank = DsrnBank({2: Const(a), 5: Const(b)})
    img = np.zeros((1, 40, 15, 1))
    out = fuse_estimates(bank, img, decision(2, 5, 0.6))
    assert np.max(np.abs(out - (0.6 * a + 0.4 * b))) < 1e-12


def test_fusion_single_model_when_confident():
    bank = DsrnBank({0: Const(2.0), 1: Const(9.0)})
    out = fuse_estimate(bank, np.zeros((40, 15)), decision(0, 1, 1.0))
    assert np.array_equal(out, np.full(90, 2.0))
    assert bank.models[1].calls == 0


def test_fusion_identical_models():
    v = np.random.default_rng(0).normal(size=90)
    bank = DsrnBank({3: Const(v), 4: Const(v)})
    for p in (0.5, 0.55, 0.9, 1.0):
        assert np.allclose(fuse_estimates(bank, np.zeros((2, 40, 15, 1)), decision(3, 4, p)), v)


def test_fusion_symmetric_in_the_two_slots():
    rng = np.random.default_rng(1)
    bank = DsrnBank({1: Linear(rng.normal(size=(600, 90))), 6: Linear(rng.normal(size=(600, 90)))})
    x = rng.normal(size=(3, 40, 15, 1))
    a = fuse_estimates(bank, x, decision(1, 6, 0.7))
    b = fuse_estimates(bank, x, UtteranceDecision(6, 1, 0.3, 0.7))
    assert np.allclose(a, b, atol=1e-12)


def test_fusion_missing_model():
    bank = DsrnBank({0: Const(1.0)})
    with pytest.raises(KeyError):
        fuse_estimates(bank, np.zeros((1, 40, 15, 1)), decision(0, 3, 0.5))


def test_fusion_bad_weights():
    bank = DsrnBank({0: Const(1.0), 1: Const(1.0)})
    with pytest.raises(ValueError):
        fuse_estimates(bank, np.zeros((1, 40, 15, 1)), UtteranceDecision(0, 1, 0.7, 0.7))


@pytest.mark.parametrize("kv", [1, 3, 5])
@pytest.mark.parametrize("n", [5, 12, 40])
def test_overlap_average_matches_enumeration(kv, n):
    est = np.random.default_rng(kv * 100 + n).normal(size=(n, 18 * kv))
    assert np.max(np.abs(overlap_average(est, kv) - brute_overlap(est, kv))) < 1e-12


def test_overlap_average_constant_and_kv1():
    v = np.arange(18.0)
    est = np.tile(np.tile(v, 5), (9, 1))
    assert np.allclose(overlap_average(est, 5), v)
    est1 = np.random.default_rng(0).normal(size=(7, 18))
    assert np.array_equal(overlap_average(est1, 1), est1)


def test_overlap_average_errors():
    with pytest.raises(ValueError):
        overlap_average(np.zeros((0, 90)), 5)
    with pytest.raises(ValueError):
        overlap_average(np.zeros((4, 90)), 4)


@settings(max_examples=30)
@given(n=st.integers(1, 30), half=st.integers(0, 4))
def test_contributor_counts(n, half):
    kv = 2 * half + 1
    counts = contributor_counts(n, kv)
    brute = [sum(1 for i in range(n) for k in range(kv) if i + k - half == j) for j in range(n)]
    assert list(counts) == brute
    assert all(counts[j] == kv for j in range(half, n - half))


@pytest.fixture(scope="module")
def shape_model():
    return fit_shape_model(random_faces(60))


def test_zero_networks_give_mean_shape(shape_model):
    nets = {}
    for e in range(7):
        net = build_dsrn(seed=e, widths=(2, 2, 2, 2), fc=(4, 4))
        for p in net.parameters():
            p[...] = 0
        nets[e] = net
    bank = DsrnBank(nets, 5, shape_model)
    feats = np.random.default_rng(0).normal(size=(23, 40))
    track, lm = animate(bank, feats, decide(np.eye(7)[3]))
    assert track.shape == (23, 18) and lm.shape == (23, 36, 2)
    mean_shape = shape_model.reconstruct(np.zeros(18))
    assert np.max(np.abs(lm - mean_shape)) < 1e-12


def test_animate_matches_step_by_step(shape_model):
    rng = np.random.default_rng(4)
    bank = DsrnBank({e: Linear(rng.normal(size=(600, 90)) / 30) for e in range(7)}, 5, shape_model)
    feats = rng.normal(size=(31, 40))
    dec = decide([0.1, 0.0, 0.45, 0.0, 0.0, 0.45, 0.0])
    track, lm = animate(bank, feats, dec)
    imgs = spectral_images(feats, 15)
    est = np.stack([dec.p_star * bank.models[dec.e_star].predict(imgs[j : j + 1])[0]
                    + dec.p_star2 * bank.models[dec.e_star2].predict(imgs[j : j + 1])[0] for j in range(31)])
    expect_track = brute_overlap(est, 5)
    assert np.max(np.abs(track - expect_track)) < 1e-10
    assert np.max(np.abs(lm - shape_model.reconstruct(expect_track))) < 1e-10
    # reconstruction is affine, so averaging in landmark space gives the same frames
    per_window = shape_model.reconstruct(est.reshape(31, 5, 18))
    lm_avg = np.stack([
        np.mean([per_window[i, j - i + 2] for i in range(max(0, j - 2), min(31, j + 3))], axis=0)
        for j in range(31)
    ])
    assert np.max(np.abs(lm - lm_avg)) < 1e-10


def test_exports(tmp_path, shape_model):
    track = np.random.default_rng(0).normal(size=(6, 18))
    write_track_csv(tmp_path / "p.csv", track)
    rows = (tmp_path / "p.csv").read_text().strip().splitlines()
    assert len(rows) == 7 and rows[0].split(",")[0] == "frame"
    write_track_json(tmp_path / "p.json", track)
    lm = shape_model.reconstruct(track)
    write_landmarks_csv(tmp_path / "l.csv", lm)
    assert read_landmarks_csv(tmp_path / "l.csv").shape == (6, 36, 2)
    paths = render_svg_frames(tmp_path / "svg", lm)
    assert len(paths) == 6
    assert paths[0].read_text().count("<polyline") == 4
