"""Command-line exporter: images in, CFT1/KPT1 files out."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .jobs import ExtractionJob, parse_query_crops, run_job
from .network import LAYER_INDEX, ActivationExtractor

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".tiff")


def collect_images(paths: list[Path]) -> tuple[Path, ...]:
    images: list[Path] = []
    for p in paths:
        if p.is_dir():
            images += [f for f in sorted(p.iterdir()) if f.suffix.lower() in IMAGE_SUFFIXES]
        else:
            images.append(p)
    return tuple(images)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convext",
        description="Export VGG16 activation tensors and SIFT keypoints",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="extract tensors/keypoints from images")
    p.add_argument("inputs", nargs="+", type=Path, help="image files or directories")
    p.add_argument("--layers", default="conv5_3", help=f"comma-separated from {sorted(LAYER_INDEX)}")
    p.add_argument("--max-dim", type=int, default=1024)
    p.add_argument("--keypoints", action="store_true", help="also write KPT1 keypoint files")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--gt", type=Path, help="ground-truth dir; emits cropped query extractions")
    p.add_argument(
        "--weights",
        default="imagenet",
        help='"imagenet", "random" (seeded, for testing), or a state_dict path',
    )
    p.add_argument("--seed", type=int, default=0, help="seed for --weights random")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    layers = tuple(s.strip() for s in args.layers.split(",") if s.strip())
    crops = parse_query_crops(args.gt) if args.gt else {}
    try:
        job = ExtractionJob(
            images=collect_images(args.inputs),
            layers=layers,
            max_dim=args.max_dim,
            keypoints=args.keypoints,
            out_dir=args.out,
            query_crops=crops,
        )
        extractor = ActivationExtractor(weights=args.weights, seed=args.seed)
        written = run_job(job, extractor)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(written)} files under {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
