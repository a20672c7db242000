"""Batch emission of interchange records, one JSON file per image.

Emission is idempotent per (image, prompt template, checkpoint): a
record whose producer block already matches is left untouched, byte for
byte.  Each file is written atomically, and a failure mid-batch leaves
no partial file behind; already-written complete records stay valid.
"""
from __future__ import annotations

from pathlib import Path

from .classtable import ClassTable
from .config import AdapterConfig
from .errors import AdapterError
from .features import image_size
from .interchange import build_record, read_producer, write_record

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def list_images(image_dir: Path | str) -> list[Path]:
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise AdapterError(f"image directory {image_dir} does not exist")
    return sorted(p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def emit_records(
    image_dir: Path | str,
    class_table: ClassTable | Path | str,
    out_dir: Path | str,
    *,
    models,
    config: AdapterConfig | None = None,
    labels: list[str] | None = None,
) -> list[Path]:
    """Run the three model roles over a directory and write records.

    ``labels`` may use aliases; emitted records always carry canonical
    class ids.  Returns the record path for every image (written or
    kept); an empty image directory returns an empty list.
    """
    config = config or AdapterConfig()
    if not isinstance(class_table, ClassTable):
        class_table = ClassTable.load(class_table)
    out_dir = Path(out_dir)

    names = labels if labels is not None else class_table.foreground_names()
    if not names:
        raise AdapterError("no class names to prompt with")
    resolved = [(class_table.resolve(name), name) for name in names]
    prompts = {name: config.prompt_template.format(name) for _, name in resolved}

    producer = {
        "model_name": models.name,
        "model_version": models.checkpoint_hash(),
        "prompt": config.prompt_template,
    }

    paths = []
    for image_path in list_images(image_dir):
        image_id = image_path.stem
        record_path = out_dir / f"{image_id}.json"
        if read_producer(record_path) == producer:
            paths.append(record_path)  # same inputs, keep existing bytes
            continue
        width, height = image_size(image_path)
        scores = models.classify(image_path, prompts)
        classifier_scores = [(cid, scores[name]) for cid, name in resolved]
        detections = []
        for cid, name in resolved:
            for box, score in models.detect(image_path, prompts[name], width, height):
                candidates = models.segment(image_path, box, width, height)
                if not candidates:
                    continue
                detections.append(
                    {
                        "label_text": prompts[name],
                        "class_id": cid,
                        "box": box,
                        "score": score,
                        "mask_candidates": candidates,
                    }
                )
        payload = build_record(
            image_id, width, height, classifier_scores, detections, producer
        )
        write_record(payload, record_path)
        paths.append(record_path)
    return paths
