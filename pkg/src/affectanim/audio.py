"""Acoustic frontend: WAV input, log mel filterbank energies, z-scoring, spectral images."""

from __future__ import annotations

import json
import wave
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

N_MELS = 40
LOG_FLOOR = 1e-10
STD_EPS = 1e-8


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip expects mono samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FrontendConfig:
    analysis_rate: int = 16000
    frame_rate: int = 100
    win_ms: float = 25.0
    n_fft: int = 512
    n_mels: int = N_MELS
    preemph: float = 0.97
    low_freq: float = 0.0
    high_freq: float | None = None

    @property
    def hop_length(self) -> int:
        return self.analysis_rate // self.frame_rate

    @property
    def win_length(self) -> int:
        return int(round(self.analysis_rate * self.win_ms / 1000.0))

    @property
    def upper_edge(self) -> float:
        return self.analysis_rate / 2.0 if self.high_freq is None else float(self.high_freq)

    def to_dict(self) -> dict:
        return asdict(self)


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM RIFF file; multichannel input is averaged to mono."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        n_channels = wf.getnchannels()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(data, rate)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: FrontendConfig) -> np.ndarray:
    """n_mels + 2 edge frequencies in Hz, equally spaced on the mel scale."""
    mels = np.linspace(hz_to_mel(cfg.low_freq), hz_to_mel(cfg.upper_edge), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """Triangular filters of unit peak, shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_band_edges(cfg)
    freqs = np.arange(cfg.n_fft // 2 + 1) * cfg.analysis_rate / cfg.n_fft
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (ctr - lo)
    falling = (hi - freqs[None, :]) / (hi - ctr)
    return np.maximum(0.0, np.minimum(rising, falling))


def resample_linear(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    if rate == target_rate:
        return samples
    n_out = int(round(len(samples) * target_rate / rate))
    t_out = np.arange(n_out) / target_rate
    t_in = np.arange(len(samples)) / rate
    return np.interp(t_out, t_in, samples)


def frame_signal(x: np.ndarray, win_length: int, hop: int) -> np.ndarray:
    """Overlapping frames; the tail is zero-padded by win_length - hop so every hop owns a frame."""
    pad = max(win_length - hop, 0)
    x = np.concatenate([x, np.zeros(pad)])
    if len(x) < win_length:
        x = np.concatenate([x, np.zeros(win_length - len(x))])
    n = (len(x) - win_length) // hop + 1
    idx = np.arange(win_length)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def extract_mfsc(clip: AudioClip, cfg: FrontendConfig | None = None) -> np.ndarray:
    """Log mel filterbank energies, one 40-dim row per 10 ms hop.

    Returns an ``(N, n_mels)`` array, not yet normalized.
    """
    cfg = cfg or FrontendConfig()
    if cfg.frame_rate != 100:
        raise ValueError("frame_rate must be 100 Hz")
    if len(clip.samples) == 0:
        raise ValueError("cannot extract features from an empty clip")
    if cfg.upper_edge > cfg.analysis_rate / 2.0:
        raise ValueError("highest mel edge exceeds the analysis Nyquist frequency")
    if clip.sample_rate < 2.0 * cfg.upper_edge:
        raise ValueError(
            f"sample rate {clip.sample_rate} Hz is below twice the highest mel edge "
            f"({cfg.upper_edge:g} Hz)"
        )
    x = resample_linear(clip.samples, clip.sample_rate, cfg.analysis_rate)
    if cfg.preemph:
        x = np.append(x[0], x[1:] - cfg.preemph * x[:-1])
    frames = frame_signal(x, cfg.win_length, cfg.hop_length) * np.hamming(cfg.win_length)
    spec = np.fft.rfft(frames, n=cfg.n_fft)
    power = (spec.real**2 + spec.imag**2) / cfg.n_fft
    energies = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(energies, LOG_FLOOR))


@dataclass
class Normalizer:
    """Per-dimension z-score statistics (population std)."""

    mean: np.ndarray
    std: np.ndarray
    eps: float = field(default=STD_EPS)

    def apply(self, seq: np.ndarray) -> np.ndarray:
        seq = np.asarray(seq, dtype=np.float64)
        ok = self.std >= self.eps
        out = np.zeros_like(seq)
        out[:, ok] = (seq[:, ok] - self.mean[ok]) / self.std[ok]
        return out

    def invert(self, seq: np.ndarray) -> np.ndarray:
        seq = np.asarray(seq, dtype=np.float64)
        ok = self.std >= self.eps
        return np.where(ok, seq * self.std + self.mean, self.mean)

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "std": self.std.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Normalizer":
        d = json.loads(text)
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Normalizer":
        return cls.from_json(Path(path).read_text())


def fit_zscore(seqs) -> Normalizer:
    stacked = np.concatenate([np.asarray(s, dtype=np.float64) for s in seqs], axis=0)
    if stacked.shape[0] < 2:
        raise ValueError("z-score statistics need at least 2 frames")
    return Normalizer(stacked.mean(axis=0), stacked.std(axis=0))


def apply_zscore(seq: np.ndarray, norm: Normalizer) -> np.ndarray:
    return norm.apply(seq)


def _check_window(k: int) -> None:
    if k <= 0 or k % 2 == 0:
        raise ValueError(f"window length must be a positive odd integer, got {k}")


def window_indices(n: int, k: int) -> np.ndarray:
    """(n, k) frame indices of every stride-1 window, replicate-padded at the edges."""
    _check_window(k)
    half = k // 2
    idx = np.arange(n)[:, None] + np.arange(-half, half + 1)[None, :]
    return np.clip(idx, 0, n - 1)


def spectral_window(seq: np.ndarray, j: int, ka: int) -> np.ndarray:
    """The (n_mels, ka) spectral image centred on frame j."""
    _check_window(ka)
    n = len(seq)
    if not 0 <= j < n:
        raise IndexError(f"frame {j} out of range for sequence of length {n}")
    half = ka // 2
    cols = np.clip(np.arange(j - half, j + half + 1), 0, n - 1)
    return np.asarray(seq)[cols].T


def spectral_images(seq: np.ndarray, ka: int) -> np.ndarray:
    """All N spectral images stacked as network input, shape (N, n_mels, ka, 1)."""
    seq = np.asarray(seq)
    idx = window_indices(len(seq), ka)
    return np.transpose(seq[idx], (0, 2, 1))[..., None]
