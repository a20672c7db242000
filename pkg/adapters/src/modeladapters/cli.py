"""Command line for the adapters: emit records, fine-tune the classifier.

Exit codes match the engine's convention: 0 success, 1 validation or
value error, 2 I/O error, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .classtable import ClassTable
from .config import AdapterConfig
from .emit import emit_records
from .errors import AdapterError
from .finetune import finetune_classifier
from .models import build_models

USAGE_ERROR = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="modeladapters", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("emit", help="write one interchange record per image")
    p.add_argument("--images", required=True, help="directory of input images")
    p.add_argument("--classes", required=True, help="classes.json shared with the engine")
    p.add_argument("--out", required=True, help="interchange store directory")
    p.add_argument("--backend", choices=("stub", "real"), default="stub")
    p.add_argument("--labels", nargs="*", default=None,
                   help="class names to prompt (aliases allowed); default: all")
    p.add_argument("--prompt-template", default=None)
    p.add_argument("--classifier-checkpoint", default=None)
    p.add_argument("--detector-checkpoint", default=None)
    p.add_argument("--segmenter-checkpoint", default=None)

    p = sub.add_parser("finetune", help="train the local classifier")
    p.add_argument("--data", required=True, help="image folder with labels.json")
    p.add_argument("--classes", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", default=None, help="training log path")
    p.add_argument("--dry-run", action="store_true",
                   help="echo the effective recipe and run zero steps")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)

    return parser


def _config_from(args) -> AdapterConfig:
    overrides = {}
    for field in (
        "prompt_template",
        "classifier_checkpoint",
        "detector_checkpoint",
        "segmenter_checkpoint",
        "epochs",
        "batch_size",
        "learning_rate",
        "weight_decay",
        "seed",
    ):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    return AdapterConfig().with_overrides(**overrides)


def _cmd_emit(args) -> int:
    config = _config_from(args)
    models = build_models(config, args.backend)
    paths = emit_records(
        args.images,
        ClassTable.load(args.classes),
        args.out,
        models=models,
        config=config,
        labels=args.labels,
    )
    print(f"emitted {len(paths)} interchange records under {args.out}")
    return 0


def _cmd_finetune(args) -> int:
    config = _config_from(args)
    result = finetune_classifier(
        args.data,
        ClassTable.load(args.classes),
        args.out,
        config=config,
        dry_run=args.dry_run,
        log_path=args.log,
    )
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return {"emit": _cmd_emit, "finetune": _cmd_finetune}[args.command](args)
    except (AdapterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    raise SystemExit(main())
