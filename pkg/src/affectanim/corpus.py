"""Corpus manifest, fold planning, and supervised example assembly."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from affectanim.audio import FrontendConfig, Normalizer, extract_mfsc, read_wav, spectral_images
from affectanim.emotion import EMOTIONS, N_EMOTIONS, emotion_index
from affectanim.shape import ShapeModelPCA, read_landmarks_csv, shape_windows, upsample_track

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("id", "speaker", "emotion", "wav_path", "landmarks_path")
MAX_FRAME_MISMATCH = 3


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    speaker: str
    emotion: int
    wav_path: Path
    landmarks_path: Path
    landmark_rate: int = 25


def load_manifest(path) -> list[UtteranceRecord]:
    """Parse a CSV manifest with columns id, speaker, emotion, wav_path, landmarks_path.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest {path} does not exist")
    base = path.parent
    records = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: manifest is missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            rid = row["id"].strip()
            try:
                emo = emotion_index(row["emotion"])
            except ValueError as exc:
                raise ValueError(f"{path}:{line} record {rid!r}: {exc}") from None
            if rid in seen:
                raise ValueError(f"{path}:{line}: duplicate record id {rid!r}")
            seen.add(rid)
            wav = (base / row["wav_path"].strip()).resolve()
            lms = (base / row["landmarks_path"].strip()).resolve()
            for p in (wav, lms):
                if not p.exists():
                    raise FileNotFoundError(f"{path}:{line} record {rid!r}: missing file {p}")
            records.append(UtteranceRecord(rid, row["speaker"].strip(), emo, wav, lms))
    return records


def write_manifest(path, records) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_FIELDS)
        for r in records:
            w.writerow([r.id, r.speaker, EMOTIONS[r.emotion],
                        _relative(r.wav_path, path.parent), _relative(r.landmarks_path, path.parent)])


def _relative(p, base) -> str:
    try:
        return str(Path(p).resolve().relative_to(Path(base).resolve()))
    except ValueError:
        return str(p)


def speakers(records) -> dict[str, list[UtteranceRecord]]:
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(r.speaker, []).append(r)
    return groups


@dataclass
class FoldPlan:
    test: list[str]
    folds: list[dict]
    seed: int = 0

    def train_ids(self, fold: int) -> list[str]:
        return self.folds[fold]["train"]

    def val_ids(self, fold: int) -> list[str]:
        return self.folds[fold]["val"]

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "test": self.test, "folds": self.folds}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        d = json.loads(text)
        return cls(d["test"], d["folds"], d.get("seed", 0))


def _apportion(sizes: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder split of ``total`` proportionally to ``sizes``."""
    quota = sizes * total / sizes.sum()
    take = np.floor(quota).astype(int)
    order = np.argsort(-(quota - take), kind="stable")
    take[order[: total - take.sum()]] += 1
    return take


def make_folds(records, seed: int = 0, n_folds: int = 5, test_fraction: float = 0.1,
               speaker_holdout: bool = False) -> FoldPlan:
    """Hold out a stratified test set, then split the rest into ``n_folds`` train/validation folds.

    Test and validation shares are stratified by emotion. With
    ``speaker_holdout`` each fold validates on whole speakers instead.
    """
    records = list(records)
    if len(records) < 10:
        raise ValueError(f"need at least 10 records to build folds, got {len(records)}")
    rng = np.random.default_rng(seed)
    by_emotion = [[r.id for r in records if r.emotion == e] for e in range(N_EMOTIONS)]
    by_emotion = [[ids[i] for i in rng.permutation(len(ids))] for ids in by_emotion]
    present = [ids for ids in by_emotion if ids]
    if any(len(ids) < 2 for ids in present):
        raise ValueError("every emotion present needs at least 2 records for a stratified split")
    sizes = np.array([len(ids) for ids in present], dtype=float)
    n_test = _apportion(sizes, int(round(test_fraction * len(records))))
    test = [i for ids, k in zip(present, n_test) for i in ids[:k]]
    rest = [i for ids, k in zip(present, n_test) for i in ids[k:]]

    folds = []
    if speaker_holdout:
        spk = {r.id: r.speaker for r in records}
        names = sorted({spk[i] for i in rest})
        if len(names) < 2:
            raise ValueError("speaker holdout needs at least two speakers")
        for k in range(n_folds):
            held = names[k % len(names)]
            folds.append({"train": [i for i in rest if spk[i] != held],
                          "val": [i for i in rest if spk[i] == held]})
    else:
        # dealing the emotion-grouped list round-robin keeps every chunk stratified
        chunks = [rest[k::n_folds] for k in range(n_folds)]
        for k in range(n_folds):
            folds.append({"train": [i for c, ch in enumerate(chunks) if c != k for i in ch],
                          "val": list(chunks[k])})
    return FoldPlan(test, folds, seed)


@dataclass
class Utterance:
    id: str
    speaker: str
    emotion: int
    features: np.ndarray
    landmarks: np.ndarray | None = None
    params: np.ndarray | None = None
    flagged: bool = False

    @property
    def n_frames(self) -> int:
        return len(self.features)


def load_utterance(record: UtteranceRecord, cfg: FrontendConfig | None = None) -> Utterance | None:
    """Extract MFSC frames and the 100 Hz landmark track; ``None`` when the track is too short."""
    features = extract_mfsc(read_wav(record.wav_path), cfg)
    track = read_landmarks_csv(record.landmarks_path)
    if len(track) < 4:
        log.warning("skipping %s: landmark track has only %d frames", record.id, len(track))
        return None
    factor = (cfg or FrontendConfig()).frame_rate // record.landmark_rate
    track = upsample_track(track, factor)
    gap = abs(len(features) - len(track))
    if gap > MAX_FRAME_MISMATCH:
        log.warning("%s: %d acoustic vs %d shape frames", record.id, len(features), len(track))
    n = min(len(features), len(track))
    return Utterance(record.id, record.speaker, record.emotion, features[:n], track[:n],
                     flagged=gap > MAX_FRAME_MISMATCH)


def attach_params(utterances, shape_model: ShapeModelPCA) -> None:
    """Align every landmark track onto the model reference and project it."""
    for u in utterances:
        lm = u.landmarks
        if shape_model.alignment is not None:
            lm = shape_model.alignment.align(lm)
        u.params = shape_model.project(lm)


@dataclass
class Examples:
    images: np.ndarray
    labels: np.ndarray
    targets: np.ndarray
    utterance: np.ndarray
    frame: np.ndarray
    ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, mask) -> "Examples":
        mask = np.asarray(mask)
        return Examples(self.images[mask], self.labels[mask], self.targets[mask],
                        self.utterance[mask], self.frame[mask], self.ids)

    def for_emotion(self, emotion: int) -> "Examples":
        return self.subset(self.labels == emotion)


def build_examples(utterances, normalizer: Normalizer | None, ka: int = 15, kv: int = 5,
                   dtype=np.float32) -> Examples:
    """One (spectral image, emotion, shape window) triple per 10 ms frame.

    Utterances must carry ``params`` (see :func:`attach_params`). Features are
    z-scored with ``normalizer`` when one is given.
    """
    imgs, labels, targets, utt, frame, ids = [], [], [], [], [], []
    for k, u in enumerate(utterances):
        if u.params is None:
            raise ValueError(f"utterance {u.id} has no shape parameters")
        n = min(u.n_frames, len(u.params))
        feats = u.features[:n] if normalizer is None else normalizer.apply(u.features[:n])
        imgs.append(spectral_images(feats, ka).astype(dtype))
        targets.append(shape_windows(u.params[:n], kv).astype(dtype))
        labels.append(np.full(n, u.emotion))
        utt.append(np.full(n, k))
        frame.append(np.arange(n))
        ids.append(u.id)
    if not imgs:
        raise ValueError("no utterances to build examples from")
    return Examples(np.concatenate(imgs), np.concatenate(labels), np.concatenate(targets),
                    np.concatenate(utt), np.concatenate(frame), ids)
