"""Command-line entry point.

Subcommands: ``generate`` (pseudo-label PNGs + manifest + traces),
``evaluate`` (report JSON), ``ablate`` (supervision-substitution table),
``inspect`` (per-image selection trace dump), ``validate-interchange``
(schema check report).

Exit codes: 0 success, 1 validation/value error, 2 I/O error, 64 usage
error (unknown flag or bad invocation).  Every flag has a config-file
equivalent; explicit flags override the file, the file overrides
built-in defaults.  Identical argv and inputs produce byte-identical
outputs, so nothing volatile (timing, absolute temp paths) is printed.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import metrics
from .backends import NOISE_PRESETS, FileBackend, OracleBackend, OracleNoise, noise_preset
from .dataio import (
    DatasetIndex,
    atomic_write_text,
    canonical_json,
    export_pseudo_labels,
    load_dataset,
    load_pseudo_labels,
    read_config_file,
    read_interchange,
)
from .errors import ValidationError
from .maskgeom import tight_box
from .pipeline import GROUND_TRUTH, PREDICTED, Pipeline, PipelineConfig, generate_dataset

USAGE_ERROR = 64

_PIPELINE_FIELDS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
_NOISE_FIELDS = ("label_flip_prob", "box_jitter_frac", "mask_morph_radius", "part_split_prob")
_RUN_KEYS = ("dataset", "format", "backend", "interchange_dir", "seed", "jobs", "out", "noise")


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with the usage code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser, need_out: bool) -> None:
    p.add_argument("--dataset", help="dataset root directory")
    p.add_argument("--format", choices=("voc_like", "coco_like"), default=None)
    p.add_argument("--backend", choices=("oracle", "files"), default=None)
    p.add_argument("--interchange-dir", help="interchange store for the files backend")
    p.add_argument("--config", help="TOML config file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="oracle noise seed (default 0)")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default 1)")
    if need_out:
        p.add_argument("--out", help="output directory")
    p.add_argument("--noise", choices=sorted(NOISE_PRESETS), default=None, help="noise preset")
    p.add_argument("--label-flip-prob", type=float, default=None)
    p.add_argument("--box-jitter-frac", type=float, default=None)
    p.add_argument("--mask-morph-radius", type=int, default=None)
    p.add_argument("--part-split-prob", type=float, default=None)


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline config")
    g.add_argument("--top-n", type=int, default=None)
    g.add_argument("--cls-score-min", type=float, default=None)
    g.add_argument("--box-threshold", type=float, default=None)
    g.add_argument("--text-threshold", type=float, default=None)
    g.add_argument("--nms-iou", type=float, default=None)
    g.add_argument("--containment-min", type=float, default=None)
    g.add_argument("--whole-coverage-min", type=float, default=None)
    g.add_argument("--union-gain-min", type=float, default=None)
    g.add_argument("--labels-source", choices=(PREDICTED, GROUND_TRUTH), default=None)
    g.add_argument("--boxes-source", choices=(PREDICTED, GROUND_TRUTH), default=None)
    g.add_argument("--ignore-boundary-band", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="pseudoseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("generate", help="write pseudo-label PNGs, manifest, and traces")
    _add_run_flags(p, need_out=True)
    _add_pipeline_flags(p)

    p = sub.add_parser("evaluate", help="score exported pseudo-labels against ground truth")
    p.add_argument("--pred", help="directory written by generate")
    p.add_argument("--gt", help="ground-truth dataset root")
    p.add_argument("--format", choices=("voc_like", "coco_like"), default=None)
    p.add_argument("--config", help="TOML config file; flags override it")
    p.add_argument("--interchange-dir", help="also score stored classifier/detector outputs")
    p.add_argument(
        "--ap",
        choices=("detection", "classification"),
        default="detection",
        help="which component AP fills the report (needs --interchange-dir)",
    )
    p.add_argument("--iou-match", type=float, default=0.5, help="detection AP match threshold")
    p.add_argument("--out", help="write the report JSON here instead of stdout")
    p.add_argument("--table", action="store_true", help="also print a per-class table")

    p = sub.add_parser("ablate", help="three-row supervision substitution table")
    _add_run_flags(p, need_out=False)
    _add_pipeline_flags(p)
    p.add_argument("--out", help="optionally write the rows as JSON")

    p = sub.add_parser("inspect", help="dump one image's selection traces as JSON")
    _add_run_flags(p, need_out=False)
    _add_pipeline_flags(p)
    p.add_argument("--image", required=True, help="image id to trace")

    p = sub.add_parser("validate-interchange", help="schema-check interchange files")
    p.add_argument("paths", nargs="+", help="interchange JSON files or directories of them")

    return parser


# ---------------------------------------------------------------------------
# settings assembly (defaults < config file < explicit flags)


def _file_sections(args) -> dict:
    path = getattr(args, "config", None)
    return read_config_file(path) if path else {"pipeline": {}, "run": {}, "noise": {}}


def _run_value(args, sections: dict, key: str, default):
    cli_val = getattr(args, key, None)
    if cli_val is not None:
        return cli_val
    return sections["run"].get(key, default)


def _build_config(args, sections: dict) -> PipelineConfig:
    unknown = sorted(set(sections["pipeline"]) - set(_PIPELINE_FIELDS))
    if unknown:
        raise ValidationError(f"unknown config keys in [pipeline] section: {unknown}")
    merged = dict(sections["pipeline"])
    for name in _PIPELINE_FIELDS:
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            merged[name] = cli_val
    return PipelineConfig().with_overrides(**merged)


def _build_noise(args, sections: dict, seed: int) -> OracleNoise:
    preset = _run_value(args, sections, "noise", None)
    noise = noise_preset(preset, seed) if preset else OracleNoise(seed=seed)
    overrides = {}
    for name in _NOISE_FIELDS:
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            overrides[name] = cli_val
        elif name in sections["noise"]:
            overrides[name] = sections["noise"][name]
    unknown = sorted(set(sections["noise"]) - set(_NOISE_FIELDS) - {"preset"})
    if unknown:
        raise ValidationError(f"unknown config keys in [noise] section: {unknown}")
    return dataclasses.replace(noise, **overrides) if overrides else noise


def _build_backend_and_dataset(args, sections: dict) -> tuple[object, DatasetIndex, int]:
    dataset_root = _run_value(args, sections, "dataset", None)
    if not dataset_root:
        raise ValidationError("no dataset given: pass --dataset or set it in the config file")
    fmt = _run_value(args, sections, "format", "voc_like")
    dataset = load_dataset(dataset_root, fmt)
    seed = int(_run_value(args, sections, "seed", 0))
    backend_name = _run_value(args, sections, "backend", "oracle")
    if backend_name == "oracle":
        backend = OracleBackend(dataset, _build_noise(args, sections, seed))
    elif backend_name == "files":
        store = _run_value(args, sections, "interchange_dir", None)
        if not store:
            raise ValidationError("files backend needs --interchange-dir")
        backend = FileBackend(store, dataset)
    else:
        raise ValidationError(f"unknown backend {backend_name!r}")
    return backend, dataset, seed


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args) -> int:
    sections = _file_sections(args)
    cfg = _build_config(args, sections)
    backend, dataset, _seed = _build_backend_and_dataset(args, sections)
    out_dir = _run_value(args, sections, "out", None)
    if not out_dir:
        raise ValidationError("no output directory: pass --out or set it in the config file")
    jobs = int(_run_value(args, sections, "jobs", 1))

    results = generate_dataset(Pipeline(backend, dataset), cfg, jobs=jobs)
    rasters = {image_id: raster for image_id, (raster, _t) in results.items()}
    export_pseudo_labels(rasters, out_dir, config_fingerprint=cfg.fingerprint())
    traces_doc = {
        "schema_version": 1,
        "config_fingerprint": cfg.fingerprint(),
        "images": {
            image_id: [t.to_dict() for t in traces]
            for image_id, (_r, traces) in results.items()
        },
    }
    atomic_write_text(Path(out_dir) / "traces.json", canonical_json(traces_doc))
    print(f"generated {len(results)} pseudo-label rasters under {out_dir}")
    return 0


def _component_ap(args, dataset: DatasetIndex, image_ids) -> tuple[dict, dict]:
    """Score stored classifier/detector outputs against ground truth."""
    store = Path(args.interchange_dir)
    scores, dets = [], []
    gt_labels, gt_boxes = {}, []
    for image_id in image_ids:
        rec = read_interchange(store / f"{image_id}.json")
        for cid, score in rec.classifier_scores:
            scores.append((image_id, cid, score))
        for det in rec.detections:
            dets.append((image_id, det.box))
        gt_labels[image_id] = sorted(dataset.gt_label_set(image_id))
        for inst in dataset.gt_instances(image_id):
            gt_boxes.append((image_id, tight_box(inst.mask, class_id=inst.class_id)))
    cls_per, cls_map = metrics.ap_classification(scores, gt_labels)
    det_per, det_map = metrics.ap_detection(dets, gt_boxes, iou_match=args.iou_match)
    return (
        {"per_class": cls_per, "map": cls_map},
        {"per_class": det_per, "map": det_map},
    )


def _cmd_evaluate(args) -> int:
    sections = _file_sections(args)
    pred_dir = _run_value(args, sections, "pred", None)
    gt_root = _run_value(args, sections, "gt", None)
    if not pred_dir or not gt_root:
        raise ValidationError("evaluate needs --pred and --gt")
    fmt = _run_value(args, sections, "format", "voc_like")
    dataset = load_dataset(gt_root, fmt)
    rasters, manifest = load_pseudo_labels(pred_dir)

    preds, gts = [], []
    for image_id in sorted(rasters):
        preds.append(rasters[image_id])
        gts.append(dataset.gt_raster(image_id))
    report = metrics.miou(
        preds, gts, dataset.class_table.num_classes, manifest.get("config_fingerprint", "")
    )

    if args.interchange_dir:
        cls_ap, det_ap = _component_ap(args, dataset, sorted(rasters))
        chosen = det_ap if args.ap == "detection" else cls_ap
        report.per_class_ap = chosen["per_class"]
        report.mean_ap = chosen["map"]
        print(f"classification mAP {cls_ap['map']:.9g}  detection mAP {det_ap['map']:.9g}")

    if args.table:
        for cid in sorted(report.per_class_iou):
            name = dataset.class_table.name_of(cid)
            print(f"  class {cid:3d} {name:<16s} iou {report.per_class_iou[cid]:.9g}")
    print(f"miou {report.miou:.9g} over {report.image_count} images")
    doc = report.to_json()
    if args.out:
        atomic_write_text(Path(args.out), doc)
    else:
        print(doc)
    return 0


def _cmd_ablate(args) -> int:
    sections = _file_sections(args)
    base = _build_config(args, sections)
    backend, dataset, _seed = _build_backend_and_dataset(args, sections)
    jobs = int(_run_value(args, sections, "jobs", 1))
    cfgs = [
        base.with_overrides(labels_source=PREDICTED, boxes_source=PREDICTED),
        base.with_overrides(labels_source=GROUND_TRUTH, boxes_source=PREDICTED),
        base.with_overrides(labels_source=GROUND_TRUTH, boxes_source=GROUND_TRUTH),
    ]
    rows = metrics.ablation_report(Pipeline(backend, dataset), cfgs, jobs=jobs)
    print(f"{'labels_source':<14} {'boxes_source':<14} pseudo_miou")
    for row in rows:
        print(f"{row.labels_source:<14} {row.boxes_source:<14} {row.pseudo_miou:.9g}")
    if args.out:
        atomic_write_text(Path(args.out), canonical_json([r.to_dict() for r in rows]))
    return 0


def _cmd_inspect(args) -> int:
    sections = _file_sections(args)
    cfg = _build_config(args, sections)
    backend, dataset, _seed = _build_backend_and_dataset(args, sections)
    _raster, traces = Pipeline(backend, dataset).generate(args.image, cfg)
    doc = {
        "image_id": args.image,
        "config_fingerprint": cfg.fingerprint(),
        "traces": [t.to_dict() for t in traces],
    }
    print(canonical_json(doc))
    return 0


def _cmd_validate_interchange(args) -> int:
    files: list[Path] = []
    for raw in args.paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.glob("*.json")))
        else:
            files.append(path)
    if not files:
        raise ValidationError("no interchange files found under the given paths")
    failures = 0
    for path in files:
        try:
            rec = read_interchange(path)
        except OSError as exc:
            print(f"FAIL {path}: {exc}")
            failures += 1
        except (ValidationError, ValueError) as exc:
            print(f"FAIL {path}: {exc}")
            failures += 1
        else:
            print(f"OK   {path} ({rec.image_id}, {len(rec.detections)} detections)")
    print(f"{len(files) - failures}/{len(files)} files valid")
    return 1 if failures else 0


_COMMANDS = {
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "inspect": _cmd_inspect,
    "validate-interchange": _cmd_validate_interchange,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    raise SystemExit(main())
