"""Command-line entry point: dataset generation, training, evaluation,
streaming, and threshold/stage sweeps."""

import argparse
import csv
import json
import random
import sys
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import SSGAConfig, TrainConfig, read_config_file
from .evaluation import SweepSpec, evaluate_dataset, sweep
from .refinement import SSGADetector
from .runtime import MemoryBank, reconfigure, stream_step, write_stream_report
from .synthetic import BenchmarkSpec, generate_benchmark, read_dataset, write_dataset


def _seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)


def _resolve_data_dir(path: str, prefer: str) -> Path:
    """Accept either a dataset root or a benchmark root holding train/ and val/."""
    root = Path(path)
    if (root / "dataset.json").exists():
        return root
    candidate = root / prefer
    if (candidate / "dataset.json").exists():
        return candidate
    raise FileNotFoundError(f"no dataset.json under {root} or {candidate}")


def _write_eval_report(path: str, results: dict):
    fields = ["split"] + list(next(iter(results.values())).to_dict().keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for split, result in results.items():
            writer.writerow([split] + list(result.to_dict().values()))
    with open(Path(path).with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump({split: r.to_dict() for split, r in results.items()}, fh, indent=1)


def cmd_gen_data(args):
    values = read_config_file(args.config) if args.config else {}
    bench = BenchmarkSpec.from_dict(values)
    if args.seed is not None:
        bench.seed = args.seed
    train_clips, val_clips = generate_benchmark(bench)
    class_names = [f"class_{i}" for i in range(bench.num_classes)]
    out = Path(args.out)
    extra = {"benchmark": bench.to_dict()}
    write_dataset(train_clips, out / "train", class_names, extra)
    write_dataset(val_clips, out / "val", class_names, extra)
    print(f"wrote {len(train_clips)} train / {len(val_clips)} val clips to {out}")


def cmd_train(args):
    values = read_config_file(args.config) if args.config else {}
    config = SSGAConfig.from_dict(values)
    train_cfg = TrainConfig.from_dict(values)
    if args.epochs is not None:
        train_cfg.epochs = args.epochs
    if args.seed is not None:
        train_cfg.seed = args.seed
    _seed_everything(train_cfg.seed)
    model = SSGADetector(config)
    clips = read_dataset(_resolve_data_dir(args.data, "train"))
    train_model_log = print if not args.quiet else None
    from .training import train_model

    history = train_model(model, clips, train_cfg, log=train_model_log)
    save_checkpoint(model, args.out)
    print(f"saved checkpoint to {args.out} (final loss {history[-1]:.4f})")


def _load_model(args) -> SSGADetector:
    model = load_checkpoint(args.ckpt)
    model.eval()
    config = model.config
    if getattr(args, "delta", None) is not None:
        config = reconfigure(config, args.delta)
    if getattr(args, "force_stages", None) is not None:
        config = config.replace(force_stages=args.force_stages)
    model.config = config
    return model


def cmd_eval(args):
    model = _load_model(args)
    clips = read_dataset(_resolve_data_dir(args.data, "val"))
    results = {}
    results["all"], _ = evaluate_dataset(model, clips)
    motions = {clip.meta.get("motion") for clip in clips}
    for motion in sorted(m for m in motions if m):
        results[motion], _ = evaluate_dataset(model, clips, motion=motion)
    for split, result in results.items():
        print(f"[{split}] " + " ".join(f"{k}={v}" for k, v in result.to_dict().items()))
    if args.report:
        _write_eval_report(args.report, results)


def cmd_stream(args):
    model = _load_model(args)
    clips = read_dataset(_resolve_data_dir(args.video, "val"))
    if args.video_id is not None:
        clips = [c for c in clips if c.video_id == args.video_id]
    if not clips:
        raise ValueError("no video to stream")
    records = []
    for clip in clips:
        bank = MemoryBank(model.config.num_stages)
        for frame in clip.frames:
            result, bank = stream_step(frame, bank, model)
            records.append((frame.frame_id, result))
    write_stream_report(records, args.report)
    mean_stages = sum(r.stages_executed for _, r in records) / len(records)
    print(f"streamed {len(records)} frames, mean stages {mean_stages:.2f}, report {args.report}")


def cmd_sweep(args):
    model = _load_model(args)
    clips = read_dataset(_resolve_data_dir(args.data, "val"))
    deltas = [float(v) for v in args.deltas.split(",")] if args.deltas else None
    stages = [int(v) for v in args.stage_counts.split(",")] if args.stage_counts else None
    rows = sweep(model, clips, SweepSpec(deltas=deltas, stage_counts=stages))
    fields = sorted({k for row in rows for k in row}, key=lambda k: (k != "setting", k != "value", k))
    for row in rows:
        print(" ".join(f"{k}={row[k]}" for k in fields if k in row))
    if args.report:
        with open(args.report, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssga", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic benchmark")
    p.add_argument("--config", help="flat key = value file with benchmark fields")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a detector on a generated dataset")
    p.add_argument("--config", help="flat key = value file with model + training fields")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="COCO-style metrics on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--force-stages", dest="force_stages", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="stream a video through the memory bank")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--video", required=True, help="dataset root (or one with val/)")
    p.add_argument("--video-id", dest="video_id", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("sweep", help="evaluate one checkpoint across settings")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--deltas", help="comma-separated stop thresholds")
    p.add_argument("--stage-counts", dest="stage_counts", help="comma-separated forced stages")
    p.add_argument("--report")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
