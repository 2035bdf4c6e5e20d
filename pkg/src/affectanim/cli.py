"""Command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from affectanim.config import RunConfig, load_config
from affectanim.emotion import emotion_index


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.fold is not None:
        if not 0 <= args.fold < cfg.n_folds:
            raise ValueError(f"fold {args.fold} outside 0..{cfg.n_folds - 1}")
        cfg.fold = args.fold
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affectanim", description="Emotion-aware speech-driven lip animation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML or JSON run config")
        p.add_argument("--seed", type=int)
        p.add_argument("--fold", type=int)
        return p

    add("prepare", "extract features, plan folds, fit normalizer and shape model")
    add("train-dern", "train the emotion classifier")
    p = add("train-dsrn", "train shape regressors")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--emotion", help="train only this emotion's regressor")
    group.add_argument("--all-combined", action="store_true", help="train one regressor on all emotions")
    p = add("evaluate", "accuracy and shape MSE report")
    p.add_argument("--split", choices=("test", "val"), default="test")
    p = add("animate", "animate a WAV file")
    p.add_argument("wav")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--render-svg", action="store_true")
    p = add("synth", "write a synthetic corpus or run the synthetic benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bench", action="store_true")
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--per-emotion", type=int, default=2)
    p.add_argument("--seconds", type=float, default=1.0)
    return parser


def run(args) -> object:
    from affectanim import pipeline

    if args.command == "synth":
        return pipeline.cmd_synth(args.out_dir, args.seed or 0, args.bench, args.speakers, args.per_emotion,
                                  args.seconds)
    cfg = _config(args)
    if args.command == "prepare":
        return pipeline.cmd_prepare(cfg)
    if args.command == "train-dern":
        history = pipeline.cmd_train_dern(cfg)
        return {"epochs": len(history), "final": history[-1]}
    if args.command == "train-dsrn":
        emotion = emotion_index(args.emotion) if args.emotion else None
        histories = pipeline.cmd_train_dsrn(cfg, emotion, args.all_combined)
        return {name: h[-1] for name, h in histories.items()}
    if args.command == "evaluate":
        report = pipeline.cmd_evaluate(cfg, args.split)
        return {k: report[k] for k in ("utterance_accuracy", "overall_accuracy", "mse")}
    if args.command == "animate":
        return pipeline.cmd_animate(cfg, args.wav, args.out_dir, args.render_svg)
    raise ValueError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except Exception as exc:  # report any failure as one diagnostic line
        print(f"affectanim {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=1, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
