import numpy as np
import pytest

from affectanim.audio import read_wav, spectral_images
from affectanim.corpus import build_examples, load_manifest
from affectanim.emotion import N_EMOTIONS
from affectanim.shape import read_landmarks_csv, shape_windows
from affectanim.synth import SyntheticSpec, generate, map_separation, split_utterances

SMALL = dict(n_utterances=21, frames=60)


def test_generate_is_deterministic():
    a = generate(SyntheticSpec(seed=3, **SMALL))
    b = generate(SyntheticSpec(seed=3, **SMALL))
    assert np.array_equal(a.maps, b.maps)
    for u, v in zip(a.utterances, b.utterances):
        assert u.id == v.id and np.array_equal(u.features, v.features) and np.array_equal(u.params, v.params)
    c = generate(SyntheticSpec(seed=4, **SMALL))
    assert not np.array_equal(a.maps, c.maps)


def test_noise_free_targets_follow_ground_truth():
    spec = SyntheticSpec(noise=0.0, seed=1, **SMALL)
    corpus = generate(spec)
    edge = spec.kv // 2 + spec.context
    for u in corpus.utterances[::5]:
        imgs = spectral_images(u.features, spec.ka)
        windows = shape_windows(u.params, spec.kv)
        for j in range(edge, len(u.features) - edge):
            assert np.allclose(corpus.ground_truth(u.emotion, imgs[j]), windows[j], atol=1e-12)


def test_maps_are_separated():
    corpus = generate(SyntheticSpec(seed=2, **SMALL))
    # fresh Monte Carlo draw, independent of the one used while generating
    sep = map_separation(corpus, 100, np.random.default_rng(12345))
    assert sep > corpus.spec.margin
    for a in range(N_EMOTIONS):
        for b in range(a + 1, N_EMOTIONS):
            assert not np.allclose(corpus.maps[a], corpus.maps[b])


def test_benchmark_corpus_size():
    spec = SyntheticSpec()
    assert spec.n_utterances * spec.frames >= 20000
    corpus = generate(SyntheticSpec(**SMALL))
    assert len(corpus.utterances) == 21
    assert {u.emotion for u in corpus.utterances} == set(range(N_EMOTIONS))
    train, val = split_utterances(corpus.utterances)
    assert not {u.id for u in train} & {u.id for u in val}
    assert {u.emotion for u in val} == set(range(N_EMOTIONS))
    ex = build_examples(val, None, spec.ka, spec.kv)
    assert ex.targets.shape[1] == spec.n_params * spec.kv


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(noise=-0.1)
    with pytest.raises(ValueError):
        SyntheticSpec(ka=3, kv=5)


def test_audio_corpus_on_disk(audio_corpus):
    recs = load_manifest(audio_corpus)
    clip = read_wav(recs[0].wav_path)
    assert clip.sample_rate == 16000 and len(clip.samples) == 16000
    assert read_landmarks_csv(recs[0].landmarks_path).shape == (25, 36, 2)
