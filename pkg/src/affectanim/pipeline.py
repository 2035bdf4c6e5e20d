"""End-to-end commands: prepare, train, evaluate, animate."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from affectanim.audio import Normalizer, extract_mfsc, fit_zscore, read_wav, spectral_images
from affectanim.config import NetConfig, RunConfig
from affectanim.corpus import (
    FoldPlan,
    Utterance,
    attach_params,
    build_examples,
    load_manifest,
    load_utterance,
    make_folds,
)
from affectanim.emotion import EMOTIONS, N_EMOTIONS, UtteranceDecision, decide, utterance_histogram
from affectanim.nn import Network, TrainConfig, dern_layers, dsrn_layers, fit
from affectanim.regression import (
    DsrnBank,
    animate,
    fuse_estimates,
    overlap_average,
    render_svg_frames,
    write_track_csv,
    write_track_json,
)
from affectanim.shape import ShapeModelPCA, fit_shape_model, write_landmarks_csv

log = logging.getLogger(__name__)

COMBINED = "combined"


def _paths(cfg: RunConfig) -> dict:
    w = cfg.work
    return {
        "folds": w / "folds.json",
        "normalizer": w / "normalizer.json",
        "shape_model": w / "shape_model.json",
        "index": w / "utterances.json",
        "utterances": w / "utterances",
        "models": w / "models",
        "logs": w / "logs",
        "report": w / "report.json",
    }


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# prepare

def cmd_prepare(cfg: RunConfig) -> dict:
    """Extract features, plan folds, and fit the normalizer and shape model on the training fold."""
    if not cfg.manifest:
        raise ValueError("config has no manifest path")
    p = _paths(cfg)
    p["utterances"].mkdir(parents=True, exist_ok=True)
    records = load_manifest(cfg.manifest)
    plan = make_folds(records, cfg.seed, cfg.n_folds, cfg.test_fraction, cfg.speaker_holdout)
    utts = []
    for rec in records:
        u = load_utterance(rec, cfg.frontend)
        if u is not None:
            utts.append(u)
    train_ids = set(plan.train_ids(cfg.fold))
    train = [u for u in utts if u.id in train_ids]
    if not train:
        raise ValueError("training fold is empty")
    normalizer = fit_zscore([u.features for u in train])
    shapes = np.concatenate([u.landmarks for u in train])
    model = fit_shape_model(shapes, n_params=cfg.n_params)
    attach_params(utts, model)

    p["folds"].write_text(plan.to_json())
    normalizer.save(p["normalizer"])
    model.save(p["shape_model"])
    index = []
    for u in utts:
        np.save(p["utterances"] / f"{u.id}.features.npy", u.features)
        np.save(p["utterances"] / f"{u.id}.params.npy", u.params)
        index.append({"id": u.id, "speaker": u.speaker, "emotion": EMOTIONS[u.emotion],
                      "n_frames": u.n_frames, "flagged": u.flagged})
    p["index"].write_text(json.dumps(index, indent=1))
    summary = {
        "n_utterances": len(utts),
        "skipped": len(records) - len(utts),
        "D": model.n_params,
        "variance_covered": model.variance_covered,
        "gpa_iterations": model.alignment.n_iter,
        "n_test": len(plan.test),
        "n_train": len(plan.train_ids(cfg.fold)),
        "n_val": len(plan.val_ids(cfg.fold)),
    }
    (cfg.work / "prepare_summary.json").write_text(json.dumps(summary, indent=1))
    log.info("prepared %d utterances; PCA D=%d covers %.4f of the variance",
             len(utts), model.n_params, model.variance_covered)
    return summary


def load_prepared(cfg: RunConfig):
    p = _paths(cfg)
    if not p["index"].exists():
        raise FileNotFoundError(f"{p['index']} not found; run `prepare` first")
    plan = FoldPlan.from_json(p["folds"].read_text())
    normalizer = Normalizer.load(p["normalizer"])
    model = ShapeModelPCA.load(p["shape_model"])
    utts = {}
    for item in json.loads(p["index"].read_text()):
        uid = item["id"]
        utts[uid] = Utterance(
            uid, item["speaker"], EMOTIONS.index(item["emotion"]),
            np.load(p["utterances"] / f"{uid}.features.npy"),
            params=np.load(p["utterances"] / f"{uid}.params.npy"),
            flagged=item["flagged"],
        )
    return plan, normalizer, model, utts


def _select(utts: dict, ids) -> list[Utterance]:
    return [utts[i] for i in ids if i in utts]


# ---------------------------------------------------------------------------
# training

def _train_cfg(net: NetConfig, seed: int) -> TrainConfig:
    return TrainConfig(epochs=net.epochs, batch_size=net.batch_size, lr=net.lr, seed=seed)


def _write_log(path: Path, history: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for r in history:
            w.writerow([r["epoch"], repr(r["train_loss"]), repr(r.get("val_loss", ""))])


def new_dern(cfg: RunConfig, seed: int) -> Network:
    layers = dern_layers(N_EMOTIONS, tuple(cfg.dern.widths), cfg.dern.fc[0], cfg.dern.dropout)
    return Network(layers, (cfg.frontend.n_mels, cfg.ka, 1), seed, name="dern")


def new_dsrn(cfg: RunConfig, seed: int, n_params: int) -> Network:
    layers = dsrn_layers(n_params * cfg.kv, tuple(cfg.dsrn.widths), tuple(cfg.dsrn.fc), cfg.dsrn.dropout)
    return Network(layers, (cfg.frontend.n_mels, cfg.ka, 1), seed, name="dsrn")


def cmd_train_dern(cfg: RunConfig) -> list[dict]:
    plan, normalizer, _, utts = load_prepared(cfg)
    train = build_examples(_select(utts, plan.train_ids(cfg.fold)), normalizer, cfg.ka, cfg.kv)
    val_u = _select(utts, plan.val_ids(cfg.fold))
    val = build_examples(val_u, normalizer, cfg.ka, cfg.kv) if val_u else None
    net = new_dern(cfg, cfg.seed * 1000 + 900)
    history = fit(net, train.images, train.labels, "classify", _train_cfg(cfg.dern, cfg.seed * 1000 + 900),
                  None if val is None else val.images, None if val is None else val.labels)
    p = _paths(cfg)
    p["models"].mkdir(parents=True, exist_ok=True)
    net.save(p["models"] / "dern.model")
    _write_log(p["logs"] / "dern_loss.csv", history)
    return history


def cmd_train_dsrn(cfg: RunConfig, emotion=None, all_combined: bool = False) -> dict:
    """Train per-emotion regressors (all seven, or one) or the single all-combined regressor."""
    plan, normalizer, model, utts = load_prepared(cfg)
    train = build_examples(_select(utts, plan.train_ids(cfg.fold)), normalizer, cfg.ka, cfg.kv)
    val_u = _select(utts, plan.val_ids(cfg.fold))
    val = build_examples(val_u, normalizer, cfg.ka, cfg.kv) if val_u else None
    p = _paths(cfg)
    p["models"].mkdir(parents=True, exist_ok=True)
    if all_combined:
        targets = [(COMBINED, None)]
    elif emotion is None:
        targets = [(EMOTIONS[e], e) for e in range(N_EMOTIONS)]
    else:
        targets = [(EMOTIONS[emotion], emotion)]
    histories = {}
    for name, e in targets:
        offset = N_EMOTIONS if e is None else e
        tr = train if e is None else train.for_emotion(e)
        va = val if (val is None or e is None) else val.for_emotion(e)
        if len(tr) == 0:
            raise ValueError(f"no training frames for {name}")
        net = new_dsrn(cfg, cfg.seed * 1000 + offset, model.n_params)
        history = fit(net, tr.images, tr.targets, "regress", _train_cfg(cfg.dsrn, cfg.seed * 1000 + offset),
                      None if va is None or len(va) == 0 else va.images,
                      None if va is None or len(va) == 0 else va.targets)
        net.save(p["models"] / f"dsrn_{name}.model")
        _write_log(p["logs"] / f"dsrn_{name}_loss.csv", history)
        histories[name] = history
    return histories


# ---------------------------------------------------------------------------
# evaluation

def load_bank(cfg: RunConfig, shape_model: ShapeModelPCA | None = None) -> DsrnBank:
    d = _paths(cfg)["models"]
    models = {}
    for e, name in enumerate(EMOTIONS):
        path = d / f"dsrn_{name}.model"
        if not path.exists():
            raise FileNotFoundError(f"missing regressor for {name}: {path}")
        models[e] = Network.load(path)
    n_params = shape_model.n_params if shape_model is not None else 18
    return DsrnBank(models, cfg.kv, shape_model, n_params)


def classify_utterance(dern, images: np.ndarray, threshold: float = 0.65) -> UtteranceDecision:
    labels = np.argmax(np.asarray(dern.predict(images)), axis=1)
    return decide(utterance_histogram(labels), threshold)


def evaluate_models(utterances, normalizer, dern, bank: DsrnBank, combined, ka: int, kv: int,
                    threshold: float = 0.65) -> dict:
    """Utterance-level emotion accuracy and shape MSE for three routing conditions.

    Conditions: ``dern_dsrn`` routes by the classifier's top-two decision,
    ``oracle_dsrn`` routes by the true emotion, ``all_combined`` uses the
    single combined regressor. Each condition reports MSE three ways:
    per coefficient of the windowed target (the training objective), per
    window (sum over the window), and per frame (sum over the parameters of
    the overlap-averaged track).
    """
    conds = ("dern_dsrn", "oracle_dsrn", "all_combined")
    sums = {c: {"coef": 0.0, "window": 0.0, "frame": 0.0} for c in conds}
    n_coef = n_win = n_frame = 0
    correct = np.zeros(N_EMOTIONS)
    seen = np.zeros(N_EMOTIONS)
    decisions = {}
    for u in utterances:
        ex = build_examples([u], normalizer, ka, kv)
        decision = classify_utterance(dern, ex.images, threshold)
        decisions[u.id] = decision.to_dict()
        seen[u.emotion] += 1
        correct[u.emotion] += decision.e_star == u.emotion
        truth = decide(np.eye(N_EMOTIONS)[u.emotion], threshold)
        preds = {
            "dern_dsrn": fuse_estimates(bank, ex.images, decision),
            "oracle_dsrn": fuse_estimates(bank, ex.images, truth),
            "all_combined": np.asarray(combined.predict(ex.images), dtype=np.float64),
        }
        true_params = u.params[: len(ex)]
        for c, est in preds.items():
            err = (est - ex.targets.astype(np.float64)) ** 2
            sums[c]["coef"] += err.sum()
            sums[c]["window"] += err.sum()
            sums[c]["frame"] += ((overlap_average(est, kv) - true_params) ** 2).sum()
        n_coef += ex.targets.size
        n_win += len(ex)
        n_frame += len(ex)
    mse = {
        c: {
            "per_coefficient": sums[c]["coef"] / n_coef,
            "per_window": sums[c]["window"] / n_win,
            "per_frame": sums[c]["frame"] / n_frame,
        }
        for c in conds
    }
    accuracy = {EMOTIONS[e]: (correct[e] / seen[e] if seen[e] else None) for e in range(N_EMOTIONS)}
    return {
        "utterance_accuracy": accuracy,
        "overall_accuracy": float(correct.sum() / max(seen.sum(), 1)),
        "mse": mse,
        "n_utterances": len(decisions),
        "decisions": decisions,
    }


def cmd_evaluate(cfg: RunConfig, split: str = "test") -> dict:
    plan, normalizer, model, utts = load_prepared(cfg)
    ids = plan.test if split == "test" else plan.val_ids(cfg.fold)
    chosen = _select(utts, ids)
    if not chosen:
        raise ValueError(f"no utterances in the {split} split")
    d = _paths(cfg)["models"]
    dern = Network.load(d / "dern.model")
    combined_path = d / f"dsrn_{COMBINED}.model"
    if not combined_path.exists():
        raise FileNotFoundError(f"missing all-combined regressor {combined_path}")
    report = evaluate_models(chosen, normalizer, dern, load_bank(cfg, model), Network.load(combined_path),
                             cfg.ka, cfg.kv, cfg.threshold)
    report["split"] = split
    report["mse_units"] = "PCA shape parameters of GPA-normalized shapes"
    _paths(cfg)["report"].write_text(json.dumps(report, indent=1))
    return report


# ---------------------------------------------------------------------------
# animation

def animate_features(cfg: RunConfig, features: np.ndarray, normalizer: Normalizer, dern, bank: DsrnBank):
    feats = normalizer.apply(features)
    decision = classify_utterance(dern, spectral_images(feats, cfg.ka), cfg.threshold)
    track, landmarks = animate(bank, feats, decision, cfg.ka)
    return decision, track, landmarks


def cmd_animate(cfg: RunConfig, wav, out_dir, render_svg: bool = False) -> dict:
    """WAV in; landmark CSV, parameter CSV/JSON, metadata JSON and optional SVG frames out."""
    p = _paths(cfg)
    normalizer = Normalizer.load(p["normalizer"])
    model = ShapeModelPCA.load(p["shape_model"])
    dern = Network.load(p["models"] / "dern.model")
    bank = load_bank(cfg, model)
    features = extract_mfsc(read_wav(wav), cfg.frontend)
    decision, track, landmarks = animate_features(cfg, features, normalizer, dern, bank)
    if not np.all(np.isfinite(landmarks)):
        raise FloatingPointError("non-finite landmark output")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_landmarks_csv(out / "landmarks.csv", landmarks)
    write_track_csv(out / "params.csv", track)
    write_track_json(out / "params.json", track, cfg.frontend.frame_rate)
    meta = {
        "wav": str(wav),
        "n_frames": int(len(track)),
        "frame_rate": cfg.frontend.frame_rate,
        "n_landmarks": int(landmarks.shape[1]),
        "decision": decision.to_dict(),
        "ka": cfg.ka,
        "kv": cfg.kv,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=1))
    if render_svg:
        render_svg_frames(out / "svg", landmarks)
    return meta


# ---------------------------------------------------------------------------
# synthetic data

def cmd_synth(out_dir, seed: int = 0, bench: bool = False, n_speakers: int = 2, per_emotion: int = 2,
              seconds: float = 1.0) -> dict:
    """Write a small on-disk audio corpus, or run the synthetic regression benchmark."""
    from affectanim.synth import SyntheticSpec, run_benchmark, write_audio_corpus

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if bench:
        result = run_benchmark(SyntheticSpec(seed=seed))
        (out / "bench.json").write_text(json.dumps(result, indent=1))
        return result
    manifest = write_audio_corpus(out, n_speakers, per_emotion, seconds, seed)
    return {"manifest": str(manifest)}
