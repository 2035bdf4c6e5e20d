"""Emotion-conditioned shape regression: top-two fusion and overlap averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from affectanim.audio import spectral_images
from affectanim.emotion import EMOTIONS, UtteranceDecision
from affectanim.shape import FACE_GROUPS, ShapeModelPCA


@dataclass
class DsrnBank:
    """One regressor per emotion index.

    Any object with ``predict(images) -> (n, D * kv)`` works as a model.
    """

    models: dict
    kv: int = 5
    shape_model: ShapeModelPCA | None = None
    n_params: int = 18
    combined: object | None = field(default=None)

    def model(self, label: int):
        try:
            return self.models[int(label)]
        except KeyError:
            raise KeyError(f"no shape regressor for emotion {EMOTIONS[int(label)]!r}") from None

    def predict(self, label: int, images: np.ndarray) -> np.ndarray:
        return np.asarray(self.model(label).predict(images), dtype=np.float64)


def fuse_estimates(bank: DsrnBank, images: np.ndarray, decision: UtteranceDecision) -> np.ndarray:
    """Weighted sum of the two selected regressors, for a stack of spectral images."""
    if abs(decision.p_star + decision.p_star2 - 1.0) > 1e-9:
        raise ValueError("decision weights must sum to 1")
    out = decision.p_star * bank.predict(decision.e_star, images)
    if decision.p_star2 > 0.0:
        out = out + decision.p_star2 * bank.predict(decision.e_star2, images)
    return out


def fuse_estimate(bank: DsrnBank, image: np.ndarray, decision: UtteranceDecision) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[..., None]
    return fuse_estimates(bank, image[None], decision)[0]


def overlap_average(estimates: np.ndarray, kv: int) -> np.ndarray:
    """Average the windowed estimates covering each frame.

    ``estimates[i]`` holds ``kv`` consecutive parameter blocks for frames
    ``i - kv//2 .. i + kv//2``. Each frame is the mean of the blocks that land
    on it; near the ends fewer windows contribute and the mean is over those.
    """
    est = np.asarray(estimates, dtype=np.float64)
    if est.ndim != 2 or est.shape[0] == 0:
        raise ValueError("need a non-empty (N, D * kv) array of window estimates")
    if kv <= 0 or kv % 2 == 0 or est.shape[1] % kv:
        raise ValueError(f"window length {kv} does not fit estimates of width {est.shape[1]}")
    n = est.shape[0]
    half = kv // 2
    blocks = est.reshape(n, kv, -1)
    total = np.zeros((n, blocks.shape[2]))
    count = np.zeros(n)
    for k in range(kv):
        # block k of window i describes frame i + k - half
        lo, hi = max(0, half - k), min(n, n + half - k)
        total[lo + k - half : hi + k - half] += blocks[lo:hi, k]
        count[lo + k - half : hi + k - half] += 1
    return total / count[:, None]


def contributor_counts(n: int, kv: int) -> np.ndarray:
    half = kv // 2
    j = np.arange(n)
    return np.minimum(j, half) + np.minimum(n - 1 - j, half) + 1


def animate(bank: DsrnBank, features: np.ndarray, decision: UtteranceDecision, ka: int = 15):
    """Normalized MFSC frames ``(N, 40)`` -> (parameter track ``(N, D)``, landmarks ``(N, 36, 2)``)."""
    if bank.shape_model is None:
        raise ValueError("the bank has no fitted shape model")
    images = spectral_images(features, ka)
    track = overlap_average(fuse_estimates(bank, images, decision), bank.kv)
    return track, bank.shape_model.reconstruct(track)


def write_track_csv(path, track: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("frame," + ",".join(f"p{i + 1}" for i in range(track.shape[1])) + "\n")
        for j, row in enumerate(track):
            fh.write(f"{j}," + ",".join(f"{v:.8g}" for v in row) + "\n")


def write_track_json(path, track: np.ndarray, frame_rate: int = 100) -> None:
    Path(path).write_text(json.dumps({"frame_rate": frame_rate, "params": np.round(track, 10).tolist()}))


def render_svg_frames(out_dir, landmarks: np.ndarray, size: int = 256, margin: float = 0.1) -> list[Path]:
    """One SVG per frame drawing jaw, nose and lip contours as polylines."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pts = np.asarray(landmarks, dtype=np.float64)
    lo = pts.reshape(-1, 2).min(axis=0)
    span = max(float((pts.reshape(-1, 2).max(axis=0) - lo).max()), 1e-12)
    scale = size * (1 - 2 * margin) / span
    paths = []
    for j, frame in enumerate(pts):
        xy = (frame - lo) * scale + size * margin
        lines = []
        for idx, closed in FACE_GROUPS.values():
            seq = list(idx) + ([idx[0]] if closed else [])
            coords = " ".join(f"{xy[i, 0]:.2f},{xy[i, 1]:.2f}" for i in seq)
            lines.append(f'<polyline points="{coords}" fill="none" stroke="black" stroke-width="1.5"/>')
        svg = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
            f'viewBox="0 0 {size} {size}">\n' + "\n".join(lines) + "\n</svg>\n"
        )
        path = out_dir / f"frame_{j:05d}.svg"
        path.write_text(svg)
        paths.append(path)
    return paths
