"""Writer for interchange records, schema version 1.

Implements the documented file contract directly (see the engine's
docs/interchange_v1.md): canonical JSON is sorted-key, compact, with
floats at 9 significant digits; the content hash is sha256 over the
canonical payload without the content_hash field itself.  Writes are
atomic (temp file in the target directory, then rename), so a record
is never visible half-written.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import AdapterError

SCHEMA_VERSION = 1


def _canonical_value(obj: Any) -> Any:
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _canonical_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical_value(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(_canonical_value(obj), sort_keys=True, separators=(",", ":"))


def content_hash(payload: Mapping[str, Any]) -> str:
    digest = hashlib.sha256(canonical_json(dict(payload)).encode("utf-8")).hexdigest()
    return f"sha256:{digest}"


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def rle_counts(mask: np.ndarray) -> list[int]:
    """Column-major uncompressed RLE; first count is the 0-run, may be 0."""
    arr = np.asarray(mask, dtype=bool)
    if arr.ndim != 2:
        raise AdapterError(f"mask must be 2-D, got shape {arr.shape}")
    flat = arr.T.reshape(-1)  # column-major pixel order
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)  # runs always start with the 0-run
    return [int(c) for c in counts]


def build_record(
    image_id: str,
    width: int,
    height: int,
    classifier_scores: Sequence[tuple[int, float]],
    detections: Sequence[dict],
    producer: Mapping[str, str],
) -> dict:
    """Assemble a schema-v1 payload and fail fast on contract violations.

    Each detection dict carries label_text, class_id, box (x0,y0,x1,y1),
    score, and mask_candidates as (bool ndarray, proposal_score) pairs.
    """
    if width < 1 or height < 1:
        raise AdapterError(f"invalid image dimensions {width}x{height}")
    for cid, score in classifier_scores:
        if not 0.0 <= score <= 1.0:
            raise AdapterError(f"classifier score {score} for class {cid} outside [0, 1]")

    det_payload = []
    for di, det in enumerate(detections):
        x0, y0, x1, y1 = (int(v) for v in det["box"])
        if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
            raise AdapterError(
                f"detection {di}: box ({x0}, {y0}, {x1}, {y1}) outside {width}x{height} image"
            )
        cands = []
        for ci, (mask, ps) in enumerate(det["mask_candidates"]):
            arr = np.asarray(mask, dtype=bool)
            if arr.shape != (height, width):
                raise AdapterError(
                    f"detection {di} candidate {ci}: mask shape {arr.shape} "
                    f"does not match image {height}x{width}"
                )
            if not 0.0 <= float(ps) <= 1.0:
                raise AdapterError(f"detection {di} candidate {ci}: proposal score outside [0, 1]")
            counts = rle_counts(arr)
            assert sum(counts) == width * height
            cands.append({"counts": counts, "proposal_score": float(ps)})
        det_payload.append(
            {
                "label_text": str(det["label_text"]),
                "class_id": int(det["class_id"]),
                "box": [x0, y0, x1, y1],
                "score": float(det["score"]),
                "mask_candidates": cands,
            }
        )

    payload = {
        "schema_version": SCHEMA_VERSION,
        "image_id": image_id,
        "image_width": int(width),
        "image_height": int(height),
        "classifier_scores": [
            {"class_id": int(cid), "score": float(score)} for cid, score in classifier_scores
        ],
        "detections": det_payload,
        "producer": {
            "model_name": str(producer.get("model_name", "unknown")),
            "model_version": str(producer.get("model_version", "unknown")),
            "prompt": str(producer.get("prompt", "")),
        },
    }
    payload["content_hash"] = content_hash(payload)
    return payload


def write_record(payload: Mapping[str, Any], path: Path | str) -> None:
    atomic_write_text(Path(path), canonical_json(dict(payload)))


def read_producer(path: Path) -> dict | None:
    """Best-effort read of an existing record's producer block (for skip checks)."""
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if not isinstance(data, dict) or data.get("schema_version") != SCHEMA_VERSION:
        return None
    producer = data.get("producer")
    return producer if isinstance(producer, dict) else None
