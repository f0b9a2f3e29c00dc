"""Command-line entry point.

Subcommands: fit, encode, index, search, eval, mask-stats. Exit codes:
0 ok, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .aggregation import AggregationConfig
from .config import (
    CLI_BITS,
    PRESETS,
    PipelineConfig,
    apply_preset,
    config_from_entries,
    read_config_file,
)
from .errors import ConfigError, ConvaggError, DataError
from .masking import MASK_KINDS, mask_stats, stack_hypercolumn
from .model import load_model, save_model
from .pipeline import (
    _load_item,
    discover_corpus,
    encode_corpus,
    fit_pipeline,
    rehash_descriptors,
    run_eval,
)
from .retrieval import search_cosine, search_hamming
from .storage import (
    load_codes,
    load_descriptors,
    save_codes,
    save_descriptors,
)

logger = logging.getLogger("convagg")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="final-dimensionality preset")
    p.add_argument("--mask", choices=MASK_KINDS)
    p.add_argument("--layers", help="comma-separated tensor suffixes to stack")
    p.add_argument("--embed", choices=("temb", "vlad", "fv"))
    p.add_argument("--agg", choices=("sum", "avg", "max", "democratic"))
    p.add_argument("--alpha", type=float, help="power-law exponent (default 0.5)")
    p.add_argument("--dim", type=int, help="retained PCA components per local feature")
    p.add_argument("--codebook-size", type=int)
    p.add_argument("--drop", type=int, help="eigen-directions dropped by temb")
    p.add_argument("--whiten", choices=("on", "off"))
    p.add_argument("--rn-dim", type=int, help="final dimension after rotation normalization")
    p.add_argument("--hash", choices=("on", "off"), help="train the binary hashing stage")
    p.add_argument("--bits", type=int, choices=CLI_BITS)
    p.add_argument("--seed", type=int)


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = config_from_entries(read_config_file(args.config), cfg)
    if args.preset:
        cfg = apply_preset(cfg, args.preset)
    updates: dict[str, object] = {}
    if args.mask is not None:
        updates["mask"] = args.mask
    if args.layers is not None:
        updates["layers"] = tuple(s.strip() for s in args.layers.split(",") if s.strip())
    if args.embed is not None:
        updates["embed"] = args.embed
    if args.dim is not None:
        updates["dim"] = args.dim
    if args.codebook_size is not None:
        updates["codebook_size"] = args.codebook_size
    if args.drop is not None:
        updates["drop"] = args.drop
    if args.agg is not None:
        updates["agg"] = replace(cfg.agg, mode=args.agg)
    if args.alpha is not None:
        updates["alpha"] = args.alpha
    if args.whiten is not None:
        updates["rn_whiten"] = args.whiten == "on"
    if args.rn_dim is not None:
        updates["rn_dim"] = args.rn_dim
    if args.hash is not None:
        updates["hash_enabled"] = args.hash == "on"
    if args.bits is not None:
        updates["bits"] = args.bits
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        cfg = replace(cfg, **updates)
    return cfg.validate()


def _cmd_fit(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    model = fit_pipeline(args.train, cfg)
    manifest = save_model(model, args.model)
    print(manifest)
    return 0


def _cmd_encode(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    descriptors, codes = encode_corpus(model, args.tensors, workers=args.workers)
    if args.out_descriptors:
        save_descriptors(descriptors, args.out_descriptors)
        print(args.out_descriptors)
    if args.out_codes:
        if codes is None:
            raise ConfigError("--out-codes requires a model fitted with hashing on")
        save_codes(codes, args.out_codes)
        print(args.out_codes)
    if not args.out_descriptors and not args.out_codes:
        raise ConfigError("nothing to do: pass --out-descriptors and/or --out-codes")
    return 0


def _cmd_index(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    descriptors = load_descriptors(args.descriptors)
    codes = rehash_descriptors(model, descriptors)
    save_codes(codes, args.out_codes)
    print(args.out_codes)
    return 0


def _cmd_search(args: argparse.Namespace) -> int:
    top_k = args.top_k
    out_lines = []
    if args.mode == "real":
        index = load_descriptors(args.index)
        queries = load_descriptors(args.queries)
        for name, vec in zip(queries.names, queries.vectors):
            ranked = search_cosine(index, vec, top_k=top_k, query=name)
            for rank, (item, score) in enumerate(zip(ranked.names, ranked.scores), start=1):
                out_lines.append(f"{name}\t{rank}\t{item}\t{score:.6f}")
    else:
        index = load_codes(args.index)
        queries = load_codes(args.queries)
        if queries.bits != index.bits:
            raise DataError(f"query codes have {queries.bits} bits, index has {index.bits}")
        for name, code in zip(queries.names, queries.codes):
            ranked = search_hamming(index, code, top_k=top_k, query=name)
            for rank, (item, score) in enumerate(zip(ranked.names, ranked.scores), start=1):
                out_lines.append(f"{name}\t{rank}\t{item}\t{int(score)}")
    text = "\n".join(out_lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    report = run_eval(
        model,
        args.db,
        args.queries,
        args.gt,
        mode=args.mode,
        workers=args.workers,
    )
    if args.out:
        Path(args.out).write_text(report.tsv(), encoding="utf-8")
    else:
        sys.stdout.write(report.tsv())
    for stage, seconds in report.timings.items():
        print(f"time\t{stage}\t{seconds:.3f}s", file=sys.stderr)
    return 0


def _cmd_mask_stats(args: argparse.Namespace) -> int:
    layers = tuple(s.strip() for s in args.layers.split(",") if s.strip())
    items = discover_corpus(args.tensors, layers)

    if args.dump_dir:
        from .errors import EmptyMaskError
        from .masking import compute_mask, dump_mask, full_mask

        args.dump_dir.mkdir(parents=True, exist_ok=True)
        for item in items:
            tensors, keypoints = _load_item(item)
            stacked = stack_hypercolumn(tensors)
            try:
                mask = compute_mask(stacked, args.mask, keypoints)
            except EmptyMaskError:
                mask = full_mask(stacked.width, stacked.height)
            dump_mask(mask, args.dump_dir / f"{item.name}.mask.txt")

    def corpus():
        for item in items:
            tensors, keypoints = _load_item(item)
            yield stack_hypercolumn(tensors), keypoints

    fraction, concentration = mask_stats(
        corpus(), args.mask, pair_cap=args.pair_cap, seed=args.seed or 0
    )
    print(f"retained_fraction\t{fraction:.6f}")
    print(f"low_correlation_fraction\t{concentration:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convagg",
        description="Selective conv-feature aggregation, hashing, and retrieval evaluation",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a pipeline model on a training tensor corpus")
    p.add_argument("--train", type=Path, required=True, help="training tensor directory")
    p.add_argument("--model", type=Path, required=True, help="output model bundle directory")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("encode", help="encode a tensor corpus to descriptors and codes")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--tensors", type=Path, required=True)
    p.add_argument("--out-descriptors", type=Path)
    p.add_argument("--out-codes", type=Path)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("index", help="hash an existing descriptor file into a binary index")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--descriptors", type=Path, required=True)
    p.add_argument("--out-codes", type=Path, required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("search", help="linear-scan search of an index")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--mode", choices=("real", "binary"), default="real")
    p.add_argument("--top-k", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("eval", help="end-to-end retrieval evaluation with ground truth")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--db", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--mode", choices=("real", "binary"), default="real")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mask-stats", help="retained fraction and correlation stats of a mask")
    p.add_argument("--tensors", type=Path, required=True)
    p.add_argument("--mask", choices=MASK_KINDS, required=True)
    p.add_argument("--layers", default="conv5_3")
    p.add_argument("--pair-cap", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-dir", type=Path, help="also write per-image mask text dumps")
    p.set_defaults(func=_cmd_mask_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvaggError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
