"""Utterance-level emotion decision from per-frame classifier labels."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

EMOTIONS = ("anger", "disgust", "fear", "happiness", "neutral", "sadness", "surprise")
N_EMOTIONS = len(EMOTIONS)
CONFIDENCE_THRESHOLD = 0.65

_ALIASES = {
    "angry": "anger", "a": "anger",
    "d": "disgust", "disgusted": "disgust",
    "f": "fear", "fearful": "fear",
    "happy": "happiness", "h": "happiness",
    "n": "neutral",
    "sad": "sadness", "sa": "sadness",
    "surprised": "surprise", "su": "surprise",
}


def emotion_index(label) -> int:
    """Map a label name, short code or integer to its index in :data:`EMOTIONS`."""
    if isinstance(label, (int, np.integer)):
        if not 0 <= label < N_EMOTIONS:
            raise ValueError(f"emotion index {label} out of range")
        return int(label)
    key = str(label).strip().lower()
    key = _ALIASES.get(key, key)
    if key not in EMOTIONS:
        raise ValueError(f"unknown emotion {label!r}; expected one of {', '.join(EMOTIONS)}")
    return EMOTIONS.index(key)


@dataclass(frozen=True)
class UtteranceDecision:
    e_star: int
    e_star2: int
    p_star: float
    p_star2: float
    histogram: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histogram"] = list(self.histogram)
        d["e_star_name"] = EMOTIONS[self.e_star]
        d["e_star2_name"] = EMOTIONS[self.e_star2]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UtteranceDecision":
        return cls(int(d["e_star"]), int(d["e_star2"]), float(d["p_star"]), float(d["p_star2"]),
                   tuple(d.get("histogram", ())))


def utterance_histogram(labels, n_classes: int = N_EMOTIONS) -> np.ndarray:
    """Fraction of frames assigned to each class."""
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if labels.size == 0:
        raise ValueError("no frame predictions")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("frame label out of range")
    return np.bincount(labels, minlength=n_classes) / labels.size


def decide(p, threshold: float = CONFIDENCE_THRESHOLD) -> UtteranceDecision:
    """Top-two emotions with normalized weights.

    Ties go to the lower index. When the winner's share exceeds
    ``threshold`` (strictly) the runner-up weight is dropped to zero.
    """
    p = np.asarray(p, dtype=np.float64)
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"class probabilities must sum to 1, got {p.sum():.8f}")
    first = int(np.argmax(p))
    rest = p.copy()
    rest[first] = -np.inf
    second = int(np.argmax(rest))
    top, runner = p[first], p[second]
    if top > threshold:
        runner = 0.0
    p_star = top / (top + runner)
    return UtteranceDecision(first, second, float(p_star), float(1.0 - p_star), tuple(float(v) for v in p))


def decide_from_labels(labels, threshold: float = CONFIDENCE_THRESHOLD) -> UtteranceDecision:
    return decide(utterance_histogram(labels), threshold)
