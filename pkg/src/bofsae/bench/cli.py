"""Command-line entry point: ``bofsae {train,eval,sweep-dict,ablate,synth}``."""

import argparse
import sys

from ..errors import BofError, ConfigurationError
from . import pipeline
from .config import load_config


def _pair(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _int_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers: {text!r}")


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", dest="overrides", action="append", type=_pair, default=[],
                   metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--dataset", help="dataset root (overrides dataset_root)")
    p.add_argument("--seed", type=int, help="root seed (overrides seed)")
    p.add_argument("--out", help="output directory (overrides out_dir)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bofsae",
        description="Character recognition with dense SIFT, stacked sparse auto-encoders, "
                    "spatial-pyramid max pooling and a linear SVM.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train encoder and SVM, write artifacts")
    _common(p)

    p = sub.add_parser("eval", help="evaluate persisted artifacts on a split")
    _common(p)
    p.add_argument("--model-dir", help="directory holding encoder.gfde and svm.gfsv (default: --out)")
    p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("sweep-dict", help="accuracy versus dictionary size")
    _common(p)
    p.add_argument("--k-list", type=_int_list, default=[256, 512, 1024, 2048])

    p = sub.add_parser("ablate", help="shallow/deep x unsupervised/fine-tuned ablation")
    _common(p)

    p = sub.add_parser("synth", help="write a synthetic glyph dataset as a PGM tree")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--side", type=int, default=90)
    p.add_argument("--seed", type=int, default=1)
    return parser


def resolve_config(args):
    overrides = list(args.overrides)
    if args.dataset is not None:
        overrides.append(("dataset_root", args.dataset))
    if args.seed is not None:
        overrides.append(("seed", str(args.seed)))
    if args.out is not None:
        overrides.append(("out_dir", args.out))
    return load_config(args.config, overrides)


def run(args):
    if args.command == "synth":
        root = pipeline.cmd_synth(args.out, args.classes, args.per_class, args.side, args.seed)
        print(f"wrote {args.classes * args.per_class} images to {root}")
        return
    try:
        cfg = resolve_config(args)
    except ConfigurationError as exc:
        raise pipeline.StageError("config", exc) from exc
    if args.command == "train":
        result = pipeline.cmd_train(cfg)
        print(f"train accuracy {result.report.accuracy:.4f}; artifacts in {cfg.out_dir}")
    elif args.command == "eval":
        rep = pipeline.cmd_eval(cfg, args.model_dir, args.split)
        print(rep.to_text(), end="")
    elif args.command == "sweep-dict":
        for row in pipeline.cmd_sweep_dict(cfg, args.k_list):
            print(f"K={row['K']:5d}  accuracy={row['accuracy']:.4f}  time={row['wall_time']:.1f}s")
    elif args.command == "ablate":
        for row in pipeline.cmd_ablate(cfg):
            print(f"{row['condition']:>14s}  accuracy={row['accuracy']:.4f}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except BofError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
