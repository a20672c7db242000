"""Dataset ingestion, class tables, the interchange store, and exports.

Two dataset layouts are understood:

* ``voc_like`` -- a directory with ``classes.json``, a ``masks/`` folder of
  8-bit class-index PNGs (the ground-truth rasters), and optionally an
  ``images/`` folder and a ``split.txt`` id list.  Instance masks are
  recovered from the rasters via 4-connected components per class.
* ``coco_like`` -- a directory with ``annotations.json`` holding COCO-style
  ``images`` / ``annotations`` / ``categories`` arrays, where each
  annotation's segmentation is either an uncompressed RLE dict or a list of
  polygons.

The interchange store is the file boundary between this engine and whatever
produced the model outputs: one JSON record per image, schema version 1,
with a content hash over the full payload.  See docs/interchange_v1.md for
the field-by-field description.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import sys
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .errors import HashMismatchError, SchemaVersionError, ValidationError
from .maskgeom import CROSS_4, BitMask, Box, LabelRaster, RleMask, rle_decode

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

INTERCHANGE_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# canonical JSON + atomic writes


def _canonical_value(obj: Any) -> Any:
    if isinstance(obj, float):
        # 9 significant digits, re-parsed so json emits the shortest repr
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {str(k): _canonical_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical_value(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, floats at 9 significant digits."""
    return json.dumps(_canonical_value(obj), sort_keys=True, separators=(",", ":"))


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# class table


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClassTable:
    """Ordered class list; id 0 is always background, 255 is never a class."""

    entries: tuple[ClassEntry, ...]

    def __post_init__(self):
        ids = [e.class_id for e in self.entries]
        if ids != list(range(len(ids))):
            raise ValidationError(f"class ids must be dense from 0, got {ids}")
        if len(ids) < 2:
            raise ValidationError("class table needs background plus at least one class")
        if len(ids) > 255:
            raise ValidationError("class table too large: 255 is reserved for ignore")
        seen: dict[str, int] = {}
        for e in self.entries:
            for name in (e.name, *e.aliases):
                if name in seen and seen[name] != e.class_id:
                    raise ValidationError(f"class name {name!r} maps to two ids")
                seen[name] = e.class_id
        object.__setattr__(self, "_by_name", seen)

    @classmethod
    def from_names(cls, names: Sequence[str], background: str = "background") -> "ClassTable":
        entries = [ClassEntry(0, background)]
        entries += [ClassEntry(i + 1, n) for i, n in enumerate(names)]
        return cls(tuple(entries))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ClassTable":
        try:
            entries = tuple(
                ClassEntry(int(e["id"]), str(e["name"]), tuple(e.get("aliases", ())))
                for e in data["classes"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed class table: {exc}") from exc
        return cls(entries)

    @classmethod
    def load(cls, path: Path) -> "ClassTable":
        try:
            data = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON in class table {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "classes": [
                {"id": e.class_id, "name": e.name, "aliases": list(e.aliases)}
                for e in self.entries
            ]
        }

    def save(self, path: Path) -> None:
        atomic_write_text(Path(path), json.dumps(self.to_dict(), indent=2) + "\n")

    @property
    def num_classes(self) -> int:
        return len(self.entries)

    def foreground_ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.entries)))

    def name_of(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.entries):
            raise ValidationError(f"class id {class_id} not in table")
        return self.entries[class_id].name

    def resolve(self, name: str) -> int:
        """Map a canonical name or alias to its class id."""
        by_name: dict[str, int] = getattr(self, "_by_name")
        if name not in by_name:
            raise ValidationError(f"unknown class name {name!r}")
        return by_name[name]

    def resolve_all(self, names: Iterable[str]) -> list[int]:
        by_name: dict[str, int] = getattr(self, "_by_name")
        unknown = [n for n in names if n not in by_name]
        if unknown:
            raise ValidationError(f"unknown class names: {sorted(set(unknown))}")
        return [by_name[n] for n in names]

    def contains_id(self, class_id: int) -> bool:
        return 0 <= class_id < len(self.entries)


# ---------------------------------------------------------------------------
# dataset index


@dataclass(frozen=True)
class Instance:
    """One ground-truth object: a class id plus its full-image mask."""

    class_id: int
    mask: BitMask


@dataclass
class ImageRecord:
    image_id: str
    width: int
    height: int
    image_path: Path | None = None
    gt_raster: LabelRaster | None = None
    gt_instances: tuple[Instance, ...] | None = None


class DatasetIndex:
    """Validated, in-memory view of a dataset split (read-only after load)."""

    def __init__(self, split: str, class_table: ClassTable, records: Sequence[ImageRecord]):
        self.split = split
        self.class_table = class_table
        self._records = {r.image_id: r for r in records}
        if len(self._records) != len(records):
            raise ValidationError("duplicate image ids in dataset")

    def __len__(self) -> int:
        return len(self._records)

    def image_ids(self) -> list[str]:
        return sorted(self._records)

    def record(self, image_id: str) -> ImageRecord:
        try:
            return self._records[image_id]
        except KeyError:
            raise ValidationError(f"image {image_id!r} not in dataset") from None

    def gt_raster(self, image_id: str) -> LabelRaster:
        rec = self.record(image_id)
        if rec.gt_raster is None:
            raise ValidationError(f"image {image_id!r} has no ground-truth raster")
        return rec.gt_raster

    def gt_instances(self, image_id: str) -> tuple[Instance, ...]:
        rec = self.record(image_id)
        if rec.gt_instances is None:
            raise ValidationError(f"image {image_id!r} has no ground-truth instances")
        return rec.gt_instances

    def gt_label_set(self, image_id: str) -> tuple[int, ...]:
        """Distinct foreground classes present in an image's ground truth."""
        rec = self.record(image_id)
        if rec.gt_instances is not None:
            return tuple(sorted({inst.class_id for inst in rec.gt_instances}))
        if rec.gt_raster is not None:
            return rec.gt_raster.class_ids()
        raise ValidationError(f"image {image_id!r} has no ground truth")


def raster_to_instances(raster: LabelRaster) -> tuple[Instance, ...]:
    """Split a class-index raster into per-object masks.

    Uses 4-connected components within each class; instance order is
    (ascending class id, component label order), which is deterministic.
    """
    instances: list[Instance] = []
    for class_id in raster.class_ids():
        class_mask = raster.arr == class_id
        labeled, n = ndimage.label(class_mask, structure=CROSS_4)
        for comp in range(1, n + 1):
            instances.append(Instance(class_id, BitMask(labeled == comp)))
    return tuple(instances)


def _load_raster_png(path: Path, class_table: ClassTable, image_id: str) -> LabelRaster:
    arr = np.asarray(Image.open(path), dtype=np.uint8)
    if arr.ndim != 2:
        raise ValidationError(
            f"ground-truth raster for {image_id!r} must be single-channel, "
            f"got shape {arr.shape}"
        )
    bad = [
        int(v)
        for v in np.unique(arr)
        if v != LabelRaster.IGNORE and not class_table.contains_id(int(v))
    ]
    if bad:
        raise ValidationError(f"raster for {image_id!r} uses class ids not in table: {bad}")
    return LabelRaster(arr)


def _load_voc_like(root: Path, class_table: ClassTable | None, split: str) -> DatasetIndex:
    classes_path = root / "classes.json"
    if class_table is None:
        if not classes_path.is_file():
            raise ValidationError(f"no class table: provide one or add {classes_path}")
        class_table = ClassTable.load(classes_path)
    mask_dir = root / "masks"
    if not mask_dir.is_dir():
        raise ValidationError(f"voc_like dataset missing masks/ directory under {root}")
    split_file = root / "split.txt"
    if split_file.is_file():
        ids = [ln.strip() for ln in split_file.read_text("utf-8").splitlines() if ln.strip()]
    else:
        ids = sorted(p.stem for p in mask_dir.glob("*.png"))
    if not ids:
        raise ValidationError(f"no images found in {root}")
    records = []
    for image_id in ids:
        mask_path = mask_dir / f"{image_id}.png"
        if not mask_path.is_file():
            raise ValidationError(f"missing ground-truth raster {mask_path}")
        raster = _load_raster_png(mask_path, class_table, image_id)
        image_path = root / "images" / f"{image_id}.png"
        records.append(
            ImageRecord(
                image_id=image_id,
                width=raster.width,
                height=raster.height,
                image_path=image_path if image_path.is_file() else None,
                gt_raster=raster,
                gt_instances=raster_to_instances(raster),
            )
        )
    return DatasetIndex(split or root.name, class_table, records)


def _segmentation_to_mask(seg: Any, width: int, height: int, where: str) -> BitMask:
    if isinstance(seg, dict):
        counts = seg.get("counts")
        size = seg.get("size")
        if not isinstance(counts, list):
            raise ValidationError(f"{where}: compressed RLE is not supported, use count lists")
        if size != [height, width]:
            raise ValidationError(f"{where}: RLE size {size} does not match image {height}x{width}")
        try:
            return rle_decode(RleMask(width, height, tuple(counts)))
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
    if isinstance(seg, list) and seg and isinstance(seg[0], list):
        img = Image.new("1", (width, height), 0)
        draw = ImageDraw.Draw(img)
        for poly in seg:
            if len(poly) < 6 or len(poly) % 2:
                raise ValidationError(f"{where}: polygon needs >= 3 (x, y) pairs")
            draw.polygon(list(map(float, poly)), fill=1)
        return BitMask(np.asarray(img, dtype=bool))
    raise ValidationError(f"{where}: unsupported segmentation payload")


def _load_coco_like(root: Path, class_table: ClassTable | None, split: str) -> DatasetIndex:
    ann_path = root / "annotations.json"
    if not ann_path.is_file():
        raise ValidationError(f"coco_like dataset missing {ann_path}")
    try:
        data = json.loads(ann_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {ann_path}: {exc}") from exc

    categories = data.get("categories", [])
    if class_table is None:
        names = [c["name"] for c in sorted(categories, key=lambda c: c["id"])]
        class_table = ClassTable.from_names(names)
    unknown = []
    cat_to_class: dict[int, int] = {}
    for cat in categories:
        try:
            cat_to_class[cat["id"]] = class_table.resolve(cat["name"])
        except ValidationError:
            unknown.append(cat["name"])
    if unknown:
        raise ValidationError(f"unknown category names (no alias matches): {sorted(unknown)}")

    by_image: dict[Any, list[dict]] = {}
    for ann in data.get("annotations", []):
        by_image.setdefault(ann["image_id"], []).append(ann)

    records = []
    for img in data.get("images", []):
        image_id = str(img.get("id"))
        width, height = int(img["width"]), int(img["height"])
        instances: list[Instance] = []
        crowd = np.zeros((height, width), dtype=bool)
        for ann in by_image.get(img["id"], []):
            where = f"image {image_id!r} annotation {ann.get('id')}"
            mask = _segmentation_to_mask(ann["segmentation"], width, height, where)
            if ann.get("iscrowd"):
                crowd |= mask.arr
                continue
            instances.append(Instance(cat_to_class[ann["category_id"]], mask))
        # Semantic raster: paint larger objects first so smaller ones stay
        # visible on top, then mark crowd regions as ignore.
        raster = np.zeros((height, width), dtype=np.uint8)
        order = sorted(range(len(instances)), key=lambda i: (-instances[i].mask.count, i))
        for i in order:
            raster[instances[i].mask.arr] = instances[i].class_id
        raster[crowd] = LabelRaster.IGNORE
        file_name = img.get("file_name")
        image_path = (root / file_name) if file_name else None
        records.append(
            ImageRecord(
                image_id=image_id,
                width=width,
                height=height,
                image_path=image_path if image_path and image_path.is_file() else None,
                gt_raster=LabelRaster(raster),
                gt_instances=tuple(instances),
            )
        )
    if not records:
        raise ValidationError(f"no images listed in {ann_path}")
    return DatasetIndex(split or root.name, class_table, records)


def load_dataset(
    root: Path | str,
    fmt: str = "voc_like",
    class_table: ClassTable | None = None,
    split: str = "",
) -> DatasetIndex:
    """Load and fully validate a dataset directory."""
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"dataset root {root} does not exist")
    if fmt == "voc_like":
        return _load_voc_like(root, class_table, split)
    if fmt == "coco_like":
        return _load_coco_like(root, class_table, split)
    raise ValidationError(f"unknown dataset format {fmt!r}")


# ---------------------------------------------------------------------------
# interchange records


@dataclass(frozen=True)
class RecordDetection:
    """One stored detection plus the mask proposals it prompted."""

    label_text: str
    class_id: int
    box: Box
    score: float
    candidates: tuple[tuple[RleMask, float], ...] = ()


@dataclass(frozen=True)
class ProducerInfo:
    model_name: str = "unknown"
    model_version: str = "unknown"
    prompt: str = ""


@dataclass(frozen=True)
class InterchangeRecord:
    image_id: str
    width: int
    height: int
    classifier_scores: tuple[tuple[int, float], ...]
    detections: tuple[RecordDetection, ...]
    producer: ProducerInfo = field(default_factory=ProducerInfo)

    def payload_dict(self) -> dict:
        return {
            "schema_version": INTERCHANGE_SCHEMA_VERSION,
            "image_id": self.image_id,
            "image_width": self.width,
            "image_height": self.height,
            "classifier_scores": [
                {"class_id": cid, "score": score} for cid, score in self.classifier_scores
            ],
            "detections": [
                {
                    "label_text": det.label_text,
                    "class_id": det.class_id,
                    "box": list(det.box.coords),
                    "score": det.score,
                    "mask_candidates": [
                        {"counts": list(rle.counts), "proposal_score": ps}
                        for rle, ps in det.candidates
                    ],
                }
                for det in self.detections
            ],
            "producer": {
                "model_name": self.producer.model_name,
                "model_version": self.producer.model_version,
                "prompt": self.producer.prompt,
            },
        }

    def content_hash(self) -> str:
        digest = hashlib.sha256(canonical_json(self.payload_dict()).encode("utf-8")).hexdigest()
        return f"sha256:{digest}"


def record_content_hash(payload: Mapping[str, Any]) -> str:
    digest = hashlib.sha256(canonical_json(dict(payload)).encode("utf-8")).hexdigest()
    return f"sha256:{digest}"


def write_interchange(rec: InterchangeRecord, path: Path | str) -> None:
    """Serialize a record (schema v1) with its content hash, atomically."""
    payload = rec.payload_dict()
    payload["content_hash"] = record_content_hash(rec.payload_dict())
    atomic_write_text(Path(path), canonical_json(payload))


def _parse_record(data: Mapping[str, Any], where: str) -> InterchangeRecord:
    try:
        image_id = str(data["image_id"])
        width = int(data["image_width"])
        height = int(data["image_height"])
        scores = tuple(
            (int(s["class_id"]), float(s["score"])) for s in data["classifier_scores"]
        )
        producer_raw = data.get("producer", {})
        producer = ProducerInfo(
            model_name=str(producer_raw.get("model_name", "unknown")),
            model_version=str(producer_raw.get("model_version", "unknown")),
            prompt=str(producer_raw.get("prompt", "")),
        )
        raw_dets = data["detections"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: malformed record field: {exc}") from exc

    if width < 1 or height < 1:
        raise ValidationError(f"{where}: invalid image dimensions {width}x{height}")
    for cid, score in scores:
        if not 0.0 <= score <= 1.0:
            raise ValidationError(f"{where}: classifier score {score} for class {cid} outside [0, 1]")

    detections = []
    for di, det in enumerate(raw_dets):
        det_where = f"{where}: detection {di}"
        try:
            x0, y0, x1, y1 = (int(v) for v in det["box"])
            box = Box(x0, y0, x1, y1, class_id=int(det["class_id"]), score=float(det["score"]))
            label_text = str(det["label_text"])
            raw_cands = det["mask_candidates"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{det_where}: malformed field: {exc}") from exc
        except ValueError as exc:
            raise ValidationError(f"{det_where}: {exc}") from exc
        if box.x0 < 0 or box.y0 < 0 or box.x1 > width or box.y1 > height:
            raise ValidationError(f"{det_where}: box {box.coords} outside {width}x{height} image")
        candidates = []
        for ci, cand in enumerate(raw_cands):
            try:
                rle = RleMask(width, height, tuple(int(c) for c in cand["counts"]))
                ps = float(cand["proposal_score"])
            except (KeyError, TypeError) as exc:
                raise ValidationError(
                    f"{det_where} candidate {ci}: malformed field: {exc}"
                ) from exc
            except ValueError as exc:
                raise ValidationError(f"{det_where} candidate {ci}: {exc}") from exc
            if not 0.0 <= ps <= 1.0:
                raise ValidationError(f"{det_where} candidate {ci}: proposal score outside [0, 1]")
            candidates.append((rle, ps))
        detections.append(
            RecordDetection(label_text, box.class_id, box, box.score, tuple(candidates))
        )
    return InterchangeRecord(image_id, width, height, scores, tuple(detections), producer)


def read_interchange(path: Path | str) -> InterchangeRecord:
    """Read and validate an interchange record; rejects tampered files."""
    path = Path(path)
    raw = path.read_text("utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: record must be a JSON object")
    version = data.get("schema_version")
    if version != INTERCHANGE_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{path}: unsupported schema version {version!r}, "
            f"expected {INTERCHANGE_SCHEMA_VERSION}"
        )
    declared = data.get("content_hash")
    if not isinstance(declared, str):
        raise ValidationError(f"{path}: missing content_hash")
    payload = {k: v for k, v in data.items() if k != "content_hash"}
    actual = record_content_hash(payload)
    if declared != actual:
        raise HashMismatchError(
            f"{path}: content hash mismatch (declared {declared}, computed {actual})"
        )
    return _parse_record(data, str(path))


# ---------------------------------------------------------------------------
# pseudo-label export


def export_pseudo_labels(
    rasters: Mapping[str, LabelRaster],
    out_dir: Path | str,
    config_fingerprint: str = "",
) -> dict:
    """Write one 8-bit PNG per raster plus a manifest JSON; returns the manifest."""
    out_dir = Path(out_dir)
    labels_dir = out_dir / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)
    images = {}
    for image_id in sorted(rasters):
        rel = f"labels/{image_id}.png"
        img = Image.fromarray(rasters[image_id].arr, mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        atomic_write_bytes(out_dir / rel, buf.getvalue())
        images[image_id] = rel
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "config_fingerprint": config_fingerprint,
        "image_count": len(images),
        "images": images,
    }
    atomic_write_text(out_dir / "manifest.json", canonical_json(manifest))
    return manifest


def load_pseudo_labels(out_dir: Path | str) -> tuple[dict[str, LabelRaster], dict]:
    """Re-read an exported manifest directory; returns (rasters, manifest)."""
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.is_file():
        raise ValidationError(f"no manifest.json under {out_dir}")
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{manifest_path}: malformed JSON: {exc}") from exc
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SchemaVersionError(f"{manifest_path}: unsupported manifest schema version")
    rasters = {}
    for image_id, rel in manifest.get("images", {}).items():
        png_path = out_dir / rel
        if not png_path.is_file():
            raise ValidationError(f"manifest names missing file {png_path}")
        arr = np.asarray(Image.open(png_path), dtype=np.uint8)
        rasters[image_id] = LabelRaster(arr)
    return rasters, manifest


# ---------------------------------------------------------------------------
# config files


def read_config_file(path: Path | str) -> dict:
    """Parse a TOML config: pipeline fields at top level, optional [run]/[noise]."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: malformed TOML: {exc}") from exc
    pipeline = {k: v for k, v in data.items() if not isinstance(v, dict)}
    return {
        "pipeline": pipeline,
        "run": dict(data.get("run", {})),
        "noise": dict(data.get("noise", {})),
    }


# ---------------------------------------------------------------------------
# result cache


class ResultCache:
    """Content-addressed byte cache with atomic per-key writes.

    Keys are built from the inputs that determine an output byte-for-byte
    (image content hash, prompt, config fingerprint, ...), so a config
    change can never serve a stale entry.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key_of(*parts: str) -> str:
        joined = "\x1f".join(parts)
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.bin"

    def get(self, key: str) -> bytes | None:
        p = self._path(key)
        try:
            return p.read_bytes()
        except FileNotFoundError:
            return None

    def put(self, key: str, data: bytes) -> None:
        with self._lock:
            atomic_write_bytes(self._path(key), data)


def raster_content_hash(raster: LabelRaster) -> str:
    h = hashlib.sha256()
    h.update(f"{raster.width}x{raster.height}:".encode())
    h.update(raster.arr.tobytes())
    return h.hexdigest()
