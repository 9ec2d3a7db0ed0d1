"""Command-line interface.

    explagree [--config FILE] [--seed N] [--out DIR] <command> [options]

Commands: gen-data, train, attribute, binarize, compare, report, run.
Exit status: 0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, PipelineConfig, load_config
from .io import FormatError

log = logging.getLogger("explagree")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="key=value config file")
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--out", default=default, help="output directory (overrides out_dir)")
    parser.add_argument("-v", "--verbose", action="store_true", default=default if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="explagree",
                                     description="Agreement analysis of explanation methods on a toy ViT.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {
        "gen-data": "generate the synthetic train/eval datasets",
        "train": "train the toy ViT and write model.xvit",
        "attribute": "compute attribution maps for every enabled method",
        "binarize": "turn attribution maps into binary masks",
        "compare": "pairwise IoU/CR matrices, overall and per class",
        "report": "SVG heatmaps, mask overlays and the run manifest",
        "run": "all stages end to end",
    }
    for name, help_text in cmds.items():
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        if name == "attribute":
            p.add_argument("--images", nargs="+", help="P5 graymap or XATT1 inputs instead of the eval split")
    return parser


def _resolve(args) -> tuple[PipelineConfig, Path]:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out is not None:
        cfg = cfg.replace(out_dir=args.out)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _dispatch(args) -> None:
    cfg, out = _resolve(args)
    cmd = args.command
    if cmd == "gen-data":
        print(pipeline.gen_data(cfg, out))
    elif cmd == "train":
        info = pipeline.train_model(cfg, out)
        print(f"training accuracy {info['train_accuracy']:.4f}")
    elif cmd == "attribute":
        doc = pipeline.attribute(cfg, out, args.images)
        print(f"{sum(len(r['maps']) for r in doc['images'])} maps, {len(doc['failures'])} failures")
    elif cmd == "binarize":
        doc = pipeline.binarize_maps(cfg, out)
        print(f"{sum(len(r['masks']) for r in doc['images'])} masks, degenerate: {doc['degenerate_masks']}")
    elif cmd == "compare":
        info = pipeline.compare(cfg, out)
        print("\n".join(info["csv"]))
    elif cmd == "report":
        manifest = pipeline.write_report(cfg, out)
        print(f"{len(manifest['report']['svg'])} heatmaps, {len(manifest['report']['overlays'])} overlays")
    elif cmd == "run":
        manifest = pipeline.run_pipeline(cfg, out)
        trend = manifest["trend_check"]
        print(f"{manifest['n_map_files']} maps, {manifest['n_mask_files']} masks, "
              f"{len(manifest['failures'])} failures -> {out / 'manifest.json'}")
        if trend.get("evaluated"):
            for k, v in trend["mean_iou"].items():
                print(f"  mean IoU {k}: {v:.4f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
