"""Synthetic corpora with known emotion-conditioned acoustic-to-shape maps.

Two generators live here. :func:`generate` builds an in-memory corpus
directly at the feature level: spectral frames come from a smooth latent
process plus a weak per-emotion spectral signature, and shape parameters are
``tanh(A_e u)`` of band-pooled local context, so every emotion has its own
ground-truth map. :func:`write_audio_corpus` renders a small on-disk corpus
(WAV + 25 Hz landmark CSV + manifest) for exercising the file-based pipeline.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from affectanim.audio import AudioClip, spectral_images, write_wav
from affectanim.corpus import Examples, Utterance, UtteranceRecord, build_examples, write_manifest
from affectanim.emotion import EMOTIONS, N_EMOTIONS, decide_from_labels
from affectanim.shape import face_template, write_landmarks_csv
from affectanim.nn import TrainConfig, build_dern, build_dsrn, fit

log = logging.getLogger(__name__)


@dataclass
class SyntheticSpec:
    n_utterances: int = 112
    frames: int = 200
    n_mels: int = 40
    n_params: int = 18
    ka: int = 15
    kv: int = 5
    latent_dim: int = 6
    n_pool: int = 8
    context: int = 1
    smoothness: float = 0.9
    frame_noise: float = 0.3
    signature: float = 0.25
    gain: float = 1.0
    noise: float = 0.05
    margin: float = 0.5
    n_speakers: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.ka < 2 * (self.kv // 2 + self.context) + 1:
            raise ValueError("spectral window too short to contain the ground-truth context")


def _bumps(n: int, centers, width: float) -> np.ndarray:
    grid = np.arange(n)[None, :]
    return np.exp(-0.5 * ((grid - np.asarray(centers)[:, None]) / width) ** 2)


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    utterances: list[Utterance]
    band_basis: np.ndarray
    signatures: np.ndarray
    pooling: np.ndarray
    maps: np.ndarray
    separation: float = 0.0

    def local_context(self, frames: np.ndarray) -> np.ndarray:
        """Pooled context vectors for every frame of a ``(N, n_mels)`` sequence (replicate padding)."""
        c = self.spec.context
        n = len(frames)
        pooled = frames @ self.pooling.T
        idx = np.clip(np.arange(n)[:, None] + np.arange(-c, c + 1)[None, :], 0, n - 1)
        return pooled[idx].reshape(n, -1)

    def frame_map(self, emotion: int, context: np.ndarray) -> np.ndarray:
        return np.tanh(context @ self.maps[emotion].T)

    def ground_truth(self, emotion: int, image: np.ndarray) -> np.ndarray:
        """The noise-free shape window for one ``(n_mels, ka)`` spectral image."""
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 3:
            image = image[..., 0]
        h, c, half = image.shape[1] // 2, self.spec.context, self.spec.kv // 2
        blocks = []
        for k in range(-half, half + 1):
            cols = image[:, h + k - c : h + k + c + 1]
            u = (self.pooling @ cols).T.reshape(-1)
            blocks.append(self.frame_map(emotion, u))
        return np.concatenate(blocks)

    def sample_frames(self, n: int, rng: np.random.Generator, emotion: int | None = None) -> np.ndarray:
        s = self.spec
        z = np.empty((n, s.latent_dim))
        z[0] = rng.standard_normal(s.latent_dim)
        innov = np.sqrt(1 - s.smoothness**2)
        for t in range(1, n):
            z[t] = s.smoothness * z[t - 1] + innov * rng.standard_normal(s.latent_dim)
        x = z @ self.band_basis.T + s.frame_noise * rng.standard_normal((n, s.n_mels))
        if emotion is not None:
            x = x + self.signatures[emotion]
        return x

    def sample_images(self, n: int, rng: np.random.Generator) -> np.ndarray:
        frames = self.sample_frames(n + self.spec.ka, rng)
        return spectral_images(frames, self.spec.ka)[self.spec.ka // 2 : self.spec.ka // 2 + n, ..., 0]


def map_separation(corpus: SyntheticCorpus, n: int = 100, rng=None) -> float:
    """Smallest mean window distance between two emotions' maps over ``n`` sampled images."""
    rng = rng or np.random.default_rng(0)
    images = corpus.sample_images(n, rng)
    out = np.stack([[corpus.ground_truth(e, im) for im in images] for e in range(N_EMOTIONS)])
    worst = np.inf
    for a in range(N_EMOTIONS):
        for b in range(a + 1, N_EMOTIONS):
            worst = min(worst, float(np.linalg.norm(out[a] - out[b], axis=1).mean()))
    return worst


def generate(spec: SyntheticSpec | None = None) -> SyntheticCorpus:
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng([spec.seed, 7])
    basis = _bumps(spec.n_mels, rng.uniform(0, spec.n_mels - 1, spec.latent_dim), spec.n_mels / 10).T
    basis *= rng.choice([-1.0, 1.0], spec.latent_dim)
    sig = np.stack([rng.standard_normal(3) @ _bumps(spec.n_mels, rng.uniform(0, spec.n_mels - 1, 3), 4.0)
                    for _ in range(N_EMOTIONS)])
    sig = spec.signature * sig / np.sqrt((sig**2).mean(axis=1, keepdims=True))
    pooling = _bumps(spec.n_mels, np.linspace(2, spec.n_mels - 3, spec.n_pool), spec.n_mels / (2 * spec.n_pool))
    pooling /= pooling.sum(axis=1, keepdims=True)
    n_in = spec.n_pool * (2 * spec.context + 1)

    corpus = SyntheticCorpus(spec, [], basis, sig, pooling, np.zeros((N_EMOTIONS, spec.n_params, n_in)))
    # the pooled context has a small scale, so rescale the gain to its spread
    probe = corpus.local_context(corpus.sample_frames(2000, np.random.default_rng([spec.seed, 8])))
    scale = spec.gain / (probe.std() * np.sqrt(n_in))
    for attempt in range(100):
        corpus.maps = scale * rng.standard_normal((N_EMOTIONS, spec.n_params, n_in))
        corpus.separation = map_separation(corpus, 100, np.random.default_rng([spec.seed, 9, attempt]))
        if corpus.separation > spec.margin:
            break
    else:
        raise RuntimeError("could not draw margin-separated maps; lower the margin")

    per_emotion = np.full(N_EMOTIONS, spec.n_utterances // N_EMOTIONS)
    per_emotion[: spec.n_utterances % N_EMOTIONS] += 1
    k = 0
    for e in range(N_EMOTIONS):
        for i in range(per_emotion[e]):
            frames = corpus.sample_frames(spec.frames, rng, e)
            params = corpus.frame_map(e, corpus.local_context(frames))
            params = params + spec.noise * rng.standard_normal(params.shape)
            speaker = f"spk{k % spec.n_speakers}"
            corpus.utterances.append(Utterance(f"syn_{EMOTIONS[e][:3]}_{i:03d}", speaker, e, frames, params=params))
            k += 1
    return corpus


def split_utterances(utterances, val_fraction: float = 0.25):
    """Deterministic per-emotion split: the last ``val_fraction`` of each emotion's utterances validate."""
    train, val = [], []
    for e in range(N_EMOTIONS):
        group = [u for u in utterances if u.emotion == e]
        n_val = max(1, int(round(val_fraction * len(group)))) if group else 0
        train += group[: len(group) - n_val]
        val += group[len(group) - n_val :]
    return train, val


@dataclass
class BenchConfig:
    dsrn_widths: tuple = (8, 16, 16, 16)
    dsrn_fc: tuple = (256, 128)
    dern_widths: tuple = (4, 8, 8)
    dern_fc: int = 32
    dsrn_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10, batch_size=64, lr=3e-3))
    dern_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=4, batch_size=64, lr=3e-3))
    val_fraction: float = 0.25


def window_mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((np.asarray(pred, np.float64) - np.asarray(target, np.float64)) ** 2))


def run_benchmark(spec: SyntheticSpec | None = None, cfg: BenchConfig | None = None) -> dict:
    """Train emotion-dependent, all-combined and emotion-classifier networks on a synthetic corpus.

    Returns validation MSEs (per coefficient of the shape window) for the
    emotion-dependent models, the combined model, and the two cascades
    (true emotion routing and classifier routing), plus frame and utterance
    level classifier accuracy.
    """
    spec = spec or SyntheticSpec()
    cfg = cfg or BenchConfig()
    corpus = generate(spec)
    train_u, val_u = split_utterances(corpus.utterances, cfg.val_fraction)
    train = build_examples(train_u, None, spec.ka, spec.kv)
    val = build_examples(val_u, None, spec.ka, spec.kv)
    seed = spec.seed

    def tcfg(base: TrainConfig, offset: int) -> TrainConfig:
        return TrainConfig(**{**asdict(base), "seed": seed * 100 + offset})

    dsrn_kw = dict(ka=spec.ka, kv=spec.kv, n_params=spec.n_params, n_mels=spec.n_mels,
                   widths=cfg.dsrn_widths, fc=cfg.dsrn_fc)
    bank = {}
    for e in range(N_EMOTIONS):
        net = build_dsrn(seed=seed * 100 + e, **dsrn_kw)
        part = train.for_emotion(e)
        fit(net, part.images, part.targets, "regress", tcfg(cfg.dsrn_train, e))
        bank[e] = net
    combined = build_dsrn(seed=seed * 100 + 50, **dsrn_kw)
    fit(combined, train.images, train.targets, "regress", tcfg(cfg.dsrn_train, 50))
    dern = build_dern(ka=spec.ka, n_mels=spec.n_mels, seed=seed * 100 + 60, widths=cfg.dern_widths, fc=cfg.dern_fc)
    fit(dern, train.images, train.labels, "classify", tcfg(cfg.dern_train, 60))

    return score_cascade(val, bank, combined, dern) | {"separation": corpus.separation}


def score_cascade(val: Examples, bank: dict, combined, dern) -> dict:
    """Window-level validation MSE under true-emotion routing, classifier routing and the combined model."""
    from affectanim.regression import DsrnBank, fuse_estimates

    dsrn_bank = DsrnBank(bank)
    sq_true = sq_pred = sq_comb = 0.0
    n_coef = 0
    utt_correct = 0
    frame_correct = 0
    utts = np.unique(val.utterance)
    for k in utts:
        part = val.subset(val.utterance == k)
        truth = int(part.labels[0])
        labels = np.argmax(dern.predict(part.images), axis=1)
        frame_correct += int((labels == truth).sum())
        decision = decide_from_labels(labels)
        utt_correct += int(decision.e_star == truth)
        oracle = fuse_estimates(dsrn_bank, part.images, decide_from_labels([truth]))
        routed = fuse_estimates(dsrn_bank, part.images, decision)
        sq_true += float(((oracle - part.targets) ** 2).sum())
        sq_pred += float(((routed - part.targets) ** 2).sum())
        sq_comb += float(((combined.predict(part.images) - part.targets) ** 2).sum())
        n_coef += part.targets.size
    res = {
        "mse_emotion_dependent": sq_true / n_coef,
        "mse_oracle_cascade": sq_true / n_coef,
        "mse_dern_cascade": sq_pred / n_coef,
        "mse_combined": sq_comb / n_coef,
        "frame_accuracy": frame_correct / len(val),
        "utterance_accuracy": utt_correct / len(utts),
    }
    res["reduction"] = 1.0 - res["mse_emotion_dependent"] / res["mse_combined"]
    return res


# ---------------------------------------------------------------------------
# on-disk audio corpus

_F0 = (190.0, 130.0, 220.0, 200.0, 140.0, 110.0, 240.0)
_TILT = (-6.0, -10.0, -8.0, -5.0, -9.0, -14.0, -4.0)
_SMILE = (-2.0, -1.5, -0.5, 3.0, 0.0, -3.0, 1.0)


def synth_utterance(emotion: int, seconds: float, rng: np.random.Generator, rate: int = 16000):
    """Harmonic "speech" and a matching 25 Hz landmark track for one emotion."""
    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    n_syll = max(1, int(seconds * 4))
    centers = np.sort(rng.uniform(0.05, seconds - 0.05, n_syll))
    envelope = lambda tt: np.clip(np.exp(-0.5 * ((tt[:, None] - centers[None, :]) / 0.06) ** 2).sum(axis=1), 0, 1)
    f0 = _F0[emotion] * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(1, 3) * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / rate
    voice = sum(10 ** (_TILT[emotion] * np.log2(h) / 20) * np.sin(h * phase) for h in range(1, 16))
    audio = 0.3 * envelope(t) * voice / 3 + 0.003 * rng.standard_normal(n)
    audio = np.clip(audio, -1, 1)

    n_lm = int(round(seconds * 25))
    t_lm = np.arange(n_lm) / 25.0
    env = envelope(t_lm)
    shapes = np.stack([face_template(mouth_open=8 * a, smile=_SMILE[emotion], jaw_drop=4 * a) for a in env])
    return AudioClip(audio, rate), shapes


def write_audio_corpus(out_dir, n_speakers: int = 2, per_emotion: int = 2, seconds: float = 1.0,
                       seed: int = 0) -> Path:
    """Write WAVs, landmark CSVs and ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "landmarks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for s in range(n_speakers):
        scale = rng.uniform(0.8, 1.2)
        angle = rng.uniform(-0.1, 0.1)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        shift = rng.uniform(100, 200, 2)
        for e in range(N_EMOTIONS):
            for i in range(per_emotion):
                uid = f"s{s}_{EMOTIONS[e][:3]}_{i:02d}"
                clip, shapes = synth_utterance(e, seconds, rng)
                shapes = scale * shapes @ rot.T + shift + 0.2 * rng.standard_normal(shapes.shape)
                wav, lms = out / "wav" / f"{uid}.wav", out / "landmarks" / f"{uid}.csv"
                write_wav(wav, clip)
                write_landmarks_csv(lms, shapes)
                records.append(UtteranceRecord(uid, f"spk{s}", e, wav, lms))
    manifest = out / "manifest.csv"
    write_manifest(manifest, records)
    return manifest
