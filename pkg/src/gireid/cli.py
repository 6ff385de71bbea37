"""Command-line interface.

Subcommands: generate-synthetic, convert-grayscale, train, evaluate, and
ablate (a loss-term toggle grid emitting JSON and Markdown tables).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .data import SyntheticSpec, write_synthetic_dataset
from .evaluate import EvalProtocol, evaluate
from .grayscale import to_grayscale, expand_channels
from .train import TrainConfig, load_checkpoint, train

DIRECTIONS = {
    "gray2ir": ("visible", "infrared"),
    "ir2gray": ("infrared", "visible"),
}


def _cmd_generate_synthetic(args):
    spec = SyntheticSpec(
        num_identities=args.ids,
        images_per_identity_per_modality=args.images_per_id,
        image_size=(args.height, args.width),
        seed=args.seed,
        modality_shift=args.modality_shift,
    )
    manifest_path = write_synthetic_dataset(spec, args.out)
    print(f"wrote {manifest_path}")
    return 0


def _cmd_convert_grayscale(args):
    src = Path(args.src)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for path in sorted(src.iterdir()):
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
            continue
        rgb = np.asarray(Image.open(path).convert("RGB"))
        gray3 = expand_channels(to_grayscale(rgb, integer_output=True))
        Image.fromarray(gray3.astype(np.uint8)).save(out / path.name)
        count += 1
    print(f"converted {count} images to {out}")
    return 0


def _train_config_from_args(args):
    config = TrainConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.checkpoint_dir = str(Path(args.out) / "checkpoint")
        config.log_path = str(Path(args.out) / "metrics.jsonl")
        Path(args.out).mkdir(parents=True, exist_ok=True)
    return config


def _cmd_train(args):
    config = _train_config_from_args(args)
    result = train(config, resume_from=args.resume)
    last = result.history[-1] if result.history else {}
    print(json.dumps({"checkpoint": result.checkpoint_path, "final": last}))
    return 0


def _protocol_from_args(args):
    query_mod, gallery_mod = DIRECTIONS[args.direction]
    cameras = (
        tuple(int(c) for c in args.cameras.split(",")) if args.cameras else None
    )
    return EvalProtocol(
        query_modality=query_mod,
        gallery_modality=gallery_mod,
        split=args.split,
        gallery_camera_filter=cameras,
        num_trials=args.trials,
        gallery_shots=args.shots,
        seed=args.eval_seed,
        max_rank=args.max_rank,
    )


def _cmd_evaluate(args):
    model, config, _ = load_checkpoint(args.checkpoint)
    if args.manifest:
        from .data import load_manifest

        manifest = load_manifest(args.manifest)
    else:
        from .train import _load_dataset

        manifest = _load_dataset(config)
    protocol = _protocol_from_args(args)
    if not config.grayscale_input:
        protocol.convert_visible = False
    report = evaluate(model, manifest, protocol)
    if args.out:
        report.save_json(args.out)
    if args.per_query:
        report.save_per_query_csv(args.per_query)
    print(json.dumps(report.to_dict()["protocol"] | {
        "rank1": report.rank1, "mAP": report.mean_ap
    }))
    return 0


def _cmd_ablate(args):
    base = TrainConfig.from_json(args.config)
    combos = [c.strip() for c in args.losses.split(",") if c.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for combo in combos:
        r1s, maps = [], []
        for seed in seeds:
            config = dataclasses.replace(base, losses=combo, seed=seed)
            config.checkpoint_dir = None
            config.log_path = None
            result = train(config)
            protocol = EvalProtocol(split=args.split)
            if not config.grayscale_input:
                protocol.convert_visible = False
            report = evaluate(result.model, result.manifest, protocol)
            r1s.append(report.rank1)
            maps.append(report.mean_ap)
        rows.append(
            {
                "losses": combo,
                "seeds": seeds,
                "rank1_mean": float(np.mean(r1s)),
                "mAP_mean": float(np.mean(maps)),
                "rank1": r1s,
                "mAP": maps,
            }
        )
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=2))
    lines = [
        "| losses | rank-1 | mAP |",
        "|---|---|---|",
    ]
    for row in rows:
        lines.append(
            f"| {row['losses']} | {row['rank1_mean']:.4f} | {row['mAP_mean']:.4f} |"
        )
    (out_dir / "ablation.md").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gireid",
        description="Grayscale-infrared cross-modality re-identification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-synthetic", help="render a synthetic dataset to disk")
    p.add_argument("--out", required=True)
    p.add_argument("--ids", type=int, default=8)
    p.add_argument("--images-per-id", type=int, default=8)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modality-shift", type=float, default=0.1)
    p.set_defaults(func=_cmd_generate_synthetic)

    p = sub.add_parser("convert-grayscale", help="batch-convert a directory of images")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convert_grayscale)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", required=True, help="TrainConfig JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output dir for checkpoint and metrics")
    p.add_argument("--resume", default=None, help="checkpoint dir to resume from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", default=None, help="override the config's dataset")
    p.add_argument("--direction", choices=sorted(DIRECTIONS), default="gray2ir")
    p.add_argument("--split", choices=("test", "train"), default="test")
    p.add_argument("--cameras", default=None, help="gallery camera filter, e.g. 2,3")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--max-rank", type=int, default=20)
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--per-query", default=None, help="write per-query APs CSV here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train/evaluate a grid of loss-term combos")
    p.add_argument("--config", required=True)
    p.add_argument("--losses", required=True, help="comma-separated combos, e.g. id,id+cross")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--split", choices=("test", "train"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
