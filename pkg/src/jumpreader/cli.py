"""Command line entry point: pretrain, speedread, eval, trace.

A run directory holds the checkpoint plus its vocabulary and label files, a
manifest recording the exact configuration, and tab-separated logs. Greedy
evaluation and seeded training are deterministic, so repeated runs with the
same inputs produce byte-identical logs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import subprocess
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .corpus import Document, Vocabulary, load_dataset, load_embeddings, random_embeddings, tokenize
from .model import ModelParams
from .reader import trace as trace_document
from .trainer import TrainConfig, evaluate_split, parse_config, pretrain, speedread_train
from .metrics import format_flop_reduction

_INIT_STREAM = 9  # rng stream id for parameter initialization


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _max_workers():
    value = os.environ.get("SJLSTM_THREADS", "").strip()
    if not value:
        return 1
    workers = int(value)
    if workers < 1:
        raise ValueError(f"SJLSTM_THREADS must be >= 1, got {value!r}")
    return workers


def _add_config_overrides(sub):
    for field in dataclasses.fields(TrainConfig):
        kind = {int: int, float: float, str: str, "int": int, "float": float,
                "str": str}[field.type]
        sub.add_argument(f"--{field.name}", type=kind, default=None,
                         help=f"override config key {field.name}")


def _load_config(args) -> TrainConfig:
    config = parse_config(args.config) if args.config else TrainConfig()
    for field in dataclasses.fields(TrainConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            setattr(config, field.name, value)
    return config.validate()


def _split_path(data_dir, split, fmt):
    path = Path(data_dir) / f"{split}.{fmt}"
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    return path


def _write_manifest(out_dir, command, config, data_paths, checkpoint):
    manifest = {
        "command": command,
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "datasets": {k: str(v) for k, v in data_paths.items()},
        "checkpoint": str(checkpoint),
        "git_describe": _git_describe(),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _save_labels(path, label_map):
    ordered = sorted(label_map, key=label_map.get)
    with open(path, "w", encoding="utf-8") as fh:
        for label in ordered:
            fh.write(label + "\n")


def _load_labels(path):
    with open(path, encoding="utf-8") as fh:
        labels = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
    return {label: idx for idx, label in enumerate(labels)}, labels


def _sidecar_files(checkpoint):
    base = Path(checkpoint).parent
    vocab_path = base / "vocab.txt"
    labels_path = base / "labels.txt"
    for p in (vocab_path, labels_path):
        if not p.exists():
            raise FileNotFoundError(f"expected {p} next to the checkpoint")
    return Vocabulary.load(vocab_path), _load_labels(labels_path)


def cmd_pretrain(args):
    config = _load_config(args)
    train_path = _split_path(args.data, "train", args.format)
    val_path = _split_path(args.data, "val", args.format)
    train_docs, vocab, label_map = load_dataset(train_path, args.format)
    val_docs, _, _ = load_dataset(val_path, args.format, vocab, label_map)

    rng = np.random.default_rng([config.seed, _INIT_STREAM])
    if args.embeddings:
        table = load_embeddings(args.embeddings, vocab, config.embed_dim, rng)
    else:
        table = random_embeddings(vocab, config.embed_dim, rng)
    params = ModelParams.new(rng, len(vocab), config.embed_dim, config.cell_size,
                             len(label_map), trunk_width=config.trunk_width,
                             embedding=table)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "pretrain.ckpt"
    _write_manifest(out, "pretrain", config,
                    {"train": train_path, "val": val_path}, checkpoint)
    with open(out / "pretrain.log", "w", encoding="utf-8") as log:
        params, history = pretrain(params, train_docs, val_docs, config, log=log)
    params.save(checkpoint)
    vocab.save(out / "vocab.txt")
    _save_labels(out / "labels.txt", label_map)
    with open(out / "pretrain_val.tsv", "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(f"{row.epoch}\t{row.val_accuracy:.4f}\n")
    for row in history:
        print(f"epoch {row.epoch}: val_accuracy {row.val_accuracy:.4f}")
    print(f"checkpoint written to {checkpoint}")
    return 0


def cmd_speedread(args):
    config = _load_config(args)
    params = ModelParams.load(args.pretrained)
    vocab, (label_map, _) = _sidecar_files(args.pretrained)
    train_path = _split_path(args.data, "train", args.format)
    val_path = _split_path(args.data, "val", args.format)
    train_docs, _, _ = load_dataset(train_path, args.format, vocab, label_map)
    val_docs, _, _ = load_dataset(val_path, args.format, vocab, label_map)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "speedread.ckpt"
    _write_manifest(out, "speedread", config,
                    {"train": train_path, "val": val_path}, checkpoint)
    with open(out / "speedread.log", "w", encoding="utf-8") as log:
        params, history = speedread_train(params, train_docs, val_docs, config, log=log)
    params.save(checkpoint)
    vocab.save(out / "vocab.txt")
    _save_labels(out / "labels.txt", label_map)
    with open(out / "speedread_val.tsv", "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(f"{row.epoch}\t{row.val_accuracy:.4f}"
                     f"\t{row.val_read_pct:.1f}\t{row.val_jump_pct:.1f}\n")
    for row in history:
        print(f"epoch {row.epoch}: val_accuracy {row.val_accuracy:.4f} "
              f"read% {row.val_read_pct:.1f} jump% {row.val_jump_pct:.1f}")
    print(f"checkpoint written to {checkpoint}")
    return 0


def cmd_eval(args):
    params = ModelParams.load(args.checkpoint)
    vocab, (label_map, labels) = _sidecar_files(args.checkpoint)
    split_path = _split_path(args.data, args.split, args.format)
    docs, _, _ = load_dataset(split_path, args.format, vocab, label_map)

    result = evaluate_split(params, docs, mode=args.mode,
                            force_read=args.force_read, seed=args.seed,
                            max_workers=_max_workers())

    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "predictions.tsv", "w", encoding="utf-8") as fh:
        for idx, (pred, gold) in enumerate(result.predictions):
            fh.write(f"{idx}\t{labels[pred]}\t{labels[gold]}\n")

    name = args.dataset_name or Path(args.data).name
    print(f"{name}\t{result.accuracy:.4f}\t{result.jump_pct:.1f}"
          f"\t{result.read_pct:.1f}\t{result.flops_full}\t{result.flops_speed}"
          f"\t{format_flop_reduction(result.flop_ratio)}")
    return 0


def cmd_trace(args):
    params = ModelParams.load(args.checkpoint)
    vocab, _ = _sidecar_files(args.checkpoint)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        with open(args.input, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    out.write("\n")
                    continue
                doc = Document(tokenize(line, vocab), 0)
                out.write(trace_document(params, doc, force_read=args.force_read) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jumpreader",
        description="Train and evaluate the skip/jump speed-reading classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="phase 1: supervised full-read training")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data", required=True, help="directory with train/val splits")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p.add_argument("--embeddings", help="GloVe-format embedding file")
    _add_config_overrides(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("speedread", help="phase 2: activate the agents")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data", required=True)
    p.add_argument("--pretrained", required=True, help="phase-1 checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    _add_config_overrides(p)
    p.set_defaults(func=cmd_speedread)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--force-read", action="store_true",
                   help="read every token, bypassing the agents")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset-name")
    p.add_argument("--out", help="directory for predictions.tsv (default: checkpoint dir)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="annotate text with skip/jump markers")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="one document per line")
    p.add_argument("--force-read", action="store_true")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
