"""Command-line entry points: synth, train, eval, export-attention.

Config precedence is CLI flags over config-file values over defaults; the
defaults are the training recipe the package ships with.  Exit codes:
0 success, 2 usage/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .dataset import (DatasetError, SynthSpec, generate_synthetic,
                      read_dataset, write_dataset)
from .episodes import EpisodeError
from .evaluation import evaluate
from .export import export_attention
from .losses import LossConfig
from .tensor_io import TensorIOError
from .trainer import NonFiniteLossError, TrainConfig, load_model, train

_LOSS_FIELDS = {f.name for f in dataclasses.fields(LossConfig)}
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)} - {"loss"}


class UsageError(ValueError):
    pass


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config file {path}: {e}")
    if not isinstance(raw, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = set(raw) - _TRAIN_FIELDS - _LOSS_FIELDS - {"dataset", "out"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _build_train_config(args) -> TrainConfig:
    train_kw = {}
    loss_kw = {}
    if args.config:
        for key, value in _load_config_file(args.config).items():
            if key in _LOSS_FIELDS:
                loss_kw[key] = value
            elif key in _TRAIN_FIELDS:
                train_kw[key] = value
    overrides = {
        "epochs": args.epochs, "episodes_per_epoch": args.episodes_per_epoch,
        "n_way": args.n_way, "k_shot": args.k_shot, "base_lr": args.lr,
        "momentum": args.momentum, "weight_decay": args.weight_decay,
        "lr_decay_every": args.lr_decay_every,
        "lr_decay_factor": args.lr_decay_factor, "seed": args.seed,
        "backbone": args.backbone, "prototype_variant": args.prototype_variant,
        "hidden_size": args.hidden,
    }
    for key, value in overrides.items():
        if value is not None:
            train_kw[key] = value
    if args.no_class_norm:
        train_kw["use_class_norm"] = False
    if args.freeze_backbone:
        train_kw["freeze_backbone"] = True

    loss_overrides = {
        "alpha": args.alpha, "beta": args.beta, "tau": args.tau,
        "t_hard": args.t_hard, "lambda_attp": args.lambda_attp,
        "lambda_attf": args.lambda_attf, "lambda_sem": args.lambda_sem,
    }
    for key, value in loss_overrides.items():
        if value is not None:
            loss_kw[key] = value
    if args.t_peak is not None:
        loss_kw["t_peak"] = None if args.t_peak == "auto" else float(args.t_peak)
    if args.no_hard_selection:
        loss_kw["hard_selection"] = False
    try:
        return TrainConfig(loss=LossConfig(**loss_kw), **train_kw)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid configuration: {e}")


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_seen=args.seen, n_unseen=args.unseen, num_attributes=args.K,
        images_per_class=args.per_class, image_size=args.image_size,
        noise_std=args.noise_std, seed=args.seed, channels=args.channels,
        seen_test_fraction=args.test_fraction,
        semantics_jitter=args.jitter, semantics_mode=args.semantics_mode)
    ds = generate_synthetic(spec)
    write_dataset(ds, args.out)
    n_train = len(ds.indices(split="train"))
    print(f"wrote {args.out}: {ds.num_classes} classes "
          f"({len(ds.seen_classes)} seen / {len(ds.unseen_classes)} unseen), "
          f"K={ds.num_attributes}, {len(ds.samples)} samples "
          f"({n_train} train)")
    return 0


def cmd_train(args) -> int:
    dataset = read_dataset(args.data)
    if args.resume:
        # continue under the checkpoint's own configuration; only the
        # target epoch count may change
        try:
            with open(Path(args.resume) / "meta.json") as fh:
                meta = json.load(fh)
        except OSError as e:
            raise UsageError(f"cannot read checkpoint: {e}")
        config = TrainConfig(**meta["train_config"])
        if args.epochs is not None:
            config.epochs = args.epochs
        final = train(config, dataset, args.out, resume_from=args.resume)
    else:
        config = _build_train_config(args)
        final = train(config, dataset, args.out)
    print(f"training complete: {final}")
    return 0


def _config_hash(meta: dict) -> str:
    blob = json.dumps(meta.get("train_config", {}), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cmd_eval(args) -> int:
    model, meta = load_model(args.ckpt)
    dataset = read_dataset(args.data)
    modes = ["zsl", "gzsl"] if args.mode == "both" else [args.mode]
    payload = {"checkpoint": str(args.ckpt), "config_hash": _config_hash(meta)}
    for mode in modes:
        report = evaluate(model, dataset, mode)
        payload[mode] = report.to_dict()
        if mode == "zsl":
            print(f"ZSL   T1={report.t1:.4f}")
        else:
            print(f"GZSL  Acc_U={report.acc_unseen:.4f} "
                  f"Acc_S={report.acc_seen:.4f} "
                  f"Acc_H={report.acc_harmonic:.4f}")
    out = Path(args.out) if args.out else Path(args.ckpt) / "metrics.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out}")
    return 0


def cmd_export_attention(args) -> int:
    model, _ = load_model(args.ckpt)
    dataset = read_dataset(args.data)
    for index in args.index:
        files = export_attention(model, dataset, index, args.out)
        print(f"image {index}: wrote {len(files)} files to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coar-zsl",
        description="Zero-shot recognition via contrastively optimized "
                    "attribute representations")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--seen", type=int, required=True)
    p.add_argument("--unseen", type=int, required=True)
    p.add_argument("--K", type=int, required=True, help="number of attributes")
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--test-fraction", type=float, default=0.2,
                   help="held-out fraction of each seen class")
    p.add_argument("--jitter", type=float, default=0.0,
                   help="uniform jitter applied to class semantics")
    p.add_argument("--semantics-mode", default="one-hot",
                   choices=["one-hot", "random", "random-orthogonal"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--epochs", type=int)
    p.add_argument("--episodes-per-epoch", type=int)
    p.add_argument("--n-way", type=int)
    p.add_argument("--k-shot", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--lr-decay-every", type=int)
    p.add_argument("--lr-decay-factor", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--backbone", choices=["cnn", "vit"])
    p.add_argument("--prototype-variant",
                   choices=["default", "separate", "shared"])
    p.add_argument("--no-class-norm", action="store_true")
    p.add_argument("--hidden", type=int, help="prototype-net hidden size")
    p.add_argument("--freeze-backbone", action="store_true")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--t-peak", help="attention peak threshold, or 'auto'")
    p.add_argument("--t-hard", type=float)
    p.add_argument("--lambda-attp", type=float)
    p.add_argument("--lambda-attf", type=float)
    p.add_argument("--lambda-sem", type=float)
    p.add_argument("--no-hard-selection", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["zsl", "gzsl", "both"], default="both")
    p.add_argument("--out", help="metrics.json path (default: inside ckpt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-attention",
                       help="write per-attribute attention PNGs and peaks")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_attention)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteLossError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (UsageError, DatasetError, EpisodeError, TensorIOError, ValueError,
            IndexError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
