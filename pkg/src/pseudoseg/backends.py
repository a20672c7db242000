"""Backends answering the three model-role questions for an image.

A backend exposes three calls with identical signatures across
implementations (duck-typed; there is no base class):

* ``classify(image_id, class_names)`` -> per-class scores
* ``detect(image_id, labels, box_threshold, text_threshold)`` -> boxes
* ``segment_in_box(image_id, det)`` -> mask proposals for one box

``FileBackend`` replays interchange records written by external model
adapters and never fabricates anything.  ``OracleBackend`` synthesizes
outputs from ground truth with seeded, configurable noise so the selection
logic can be exercised (and stress-tested) without any model.  Both are
read-only after construction and safe to call concurrently; oracle results
are a pure function of (ground truth, noise, image id, arguments).
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import DatasetIndex, Instance, read_interchange
from .errors import ValidationError
from .maskgeom import (
    BitMask,
    Box,
    RleMask,
    dilate_mask,
    erode_mask,
    rle_encode,
    tight_box,
)


@dataclass(frozen=True)
class ClassPrediction:
    class_id: int
    score: float


@dataclass(frozen=True)
class Detection:
    """A thresholded box detection; class id and score live on the box."""

    box: Box
    source_label_text: str = ""


@dataclass(frozen=True)
class MaskCandidate:
    """One mask proposal for a box; box_id names the prompting detection."""

    mask: RleMask
    proposal_score: float
    box_id: int = 0


@dataclass(frozen=True)
class OracleNoise:
    """Seeded corruption knobs for the oracle backend.

    label_flip_prob moves a present class's score to a uniformly chosen
    other class; box_jitter_frac shifts each box side by a uniform fraction
    of its length; mask_morph_radius erodes (negative) or dilates (positive)
    emitted masks by that many 4-neighborhood steps; part_split_prob emits
    an object as two part masks instead of one whole mask.
    """

    seed: int = 0
    label_flip_prob: float = 0.0
    box_jitter_frac: float = 0.0
    mask_morph_radius: int = 0
    part_split_prob: float = 0.0

    def __post_init__(self):
        for name in ("label_flip_prob", "part_split_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.box_jitter_frac < 0.0:
            raise ValueError(f"box_jitter_frac must be >= 0, got {self.box_jitter_frac}")


NOISE_PRESETS = {
    # "mild": one boundary pixel of mask error, 10% label flips, 10% jitter
    "preset-zero": OracleNoise(),
    "preset-mild": OracleNoise(label_flip_prob=0.1, box_jitter_frac=0.1, mask_morph_radius=1),
}


def noise_preset(name: str, seed: int) -> OracleNoise:
    if name not in NOISE_PRESETS:
        raise ValidationError(f"unknown noise preset {name!r}; choose from {sorted(NOISE_PRESETS)}")
    base = NOISE_PRESETS[name]
    return OracleNoise(
        seed=seed,
        label_flip_prob=base.label_flip_prob,
        box_jitter_frac=base.box_jitter_frac,
        mask_morph_radius=base.mask_morph_radius,
        part_split_prob=base.part_split_prob,
    )


def _stable_hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


class OracleBackend:
    """Derives model outputs from ground truth with seeded noise.

    Every call derives its RNG from (seed, image id, operation, index), so
    results depend only on the call's arguments, never on call order.
    """

    def __init__(self, dataset: DatasetIndex, noise: OracleNoise | None = None):
        self.dataset = dataset
        self.class_table = dataset.class_table
        self.noise = noise or OracleNoise()

    def _rng(self, image_id: str, op: str, index: int = 0) -> np.random.Generator:
        seq = np.random.SeedSequence(
            [self.noise.seed & 0xFFFFFFFFFFFFFFFF, _stable_hash64(image_id), _stable_hash64(op), index]
        )
        return np.random.default_rng(seq)

    def _present_classes(self, image_id: str) -> tuple[int, ...]:
        return self.dataset.gt_label_set(image_id)

    def classify(self, image_id: str, class_names: list[str]) -> list[ClassPrediction]:
        requested = self.class_table.resolve_all(class_names)
        present = set(self._present_classes(image_id))
        if self.noise.label_flip_prob > 0.0:
            rng = self._rng(image_id, "classify")
            foreground = self.class_table.foreground_ids()
            flipped = set()
            for cid in sorted(present):
                if rng.random() < self.noise.label_flip_prob:
                    others = [c for c in foreground if c != cid]
                    flipped.add(int(others[rng.integers(len(others))]))
                else:
                    flipped.add(cid)
            present = flipped
        return [ClassPrediction(cid, 1.0 if cid in present else 0.0) for cid in requested]

    def _jitter_box(self, box: Box, image_id: str, index: int, width: int, height: int) -> Box:
        frac = self.noise.box_jitter_frac
        if frac == 0.0:
            return box
        rng = self._rng(image_id, "detect", index)
        # four independent side shifts, drawn in (x0, x1, y0, y1) order
        u = rng.uniform(-frac, frac, size=4)
        x0 = box.x0 + u[0] * box.width
        x1 = box.x1 + u[1] * box.width
        y0 = box.y0 + u[2] * box.height
        y1 = box.y1 + u[3] * box.height
        if x0 > x1:
            x0, x1 = x1, x0
        if y0 > y1:
            y0, y1 = y1, y0
        x0 = max(0, min(int(np.rint(x0)), width - 1))
        y0 = max(0, min(int(np.rint(y0)), height - 1))
        x1 = max(x0 + 1, min(int(np.rint(x1)), width))
        y1 = max(y0 + 1, min(int(np.rint(y1)), height))
        return Box(x0, y0, x1, y1, class_id=box.class_id, score=box.score)

    def detect(
        self,
        image_id: str,
        labels: list[int],
        box_threshold: float,
        text_threshold: float,
    ) -> list[Detection]:
        if not labels:
            raise ValueError("detect requires at least one label")
        del text_threshold  # applied by real detectors before emission
        rec = self.dataset.record(image_id)
        wanted = set(labels)
        out = []
        for index, inst in enumerate(self.dataset.gt_instances(image_id)):
            if inst.class_id not in wanted or inst.mask.count == 0:
                continue
            box = tight_box(inst.mask, class_id=inst.class_id, score=1.0)
            box = self._jitter_box(box, image_id, index, rec.width, rec.height)
            if box.score >= box_threshold:
                out.append(Detection(box, self.class_table.name_of(inst.class_id)))
        return out

    def _matching_instance(self, image_id: str, det: Detection) -> tuple[int, Instance] | None:
        best = None
        best_overlap = 0
        for index, inst in enumerate(self.dataset.gt_instances(image_id)):
            if inst.class_id != det.box.class_id:
                continue
            b = det.box
            overlap = int(np.count_nonzero(inst.mask.arr[b.y0 : b.y1, b.x0 : b.x1]))
            if overlap > best_overlap:
                best, best_overlap = (index, inst), overlap
        return best

    def _split_parts(self, mask: BitMask) -> tuple[BitMask, BitMask] | None:
        """Cut the mask in two along its longer axis, through the centroid."""
        ys, xs = np.nonzero(mask.arr)
        if ys.size < 2:
            return None
        span_y = int(ys.max() - ys.min()) + 1
        span_x = int(xs.max() - xs.min()) + 1
        first = np.zeros_like(mask.arr)
        if span_y >= span_x:
            cut = int(np.floor(ys.mean()))
            first[: cut + 1, :] = True
        else:
            cut = int(np.floor(xs.mean()))
            first[:, : cut + 1] = True
        a = mask.arr & first
        b = mask.arr & ~first
        if not a.any() or not b.any():
            return None
        return BitMask(a), BitMask(b)

    def segment_in_box(self, image_id: str, det: Detection) -> list[MaskCandidate]:
        match = self._matching_instance(image_id, det)
        if match is None:
            return []
        index, inst = match
        rng = self._rng(image_id, "segment", index)
        parts: list[tuple[BitMask, float]] = [(inst.mask, 1.0)]
        if self.noise.part_split_prob > 0.0 and rng.random() < self.noise.part_split_prob:
            split = self._split_parts(inst.mask)
            if split is not None:
                parts = [(split[0], 0.9), (split[1], 0.9)]
        radius = self.noise.mask_morph_radius
        out = []
        for mask, score in parts:
            if radius > 0:
                mask = dilate_mask(mask, radius)
            elif radius < 0:
                eroded = erode_mask(mask, -radius)
                if eroded.count == 0:
                    continue
                mask = eroded
            out.append(MaskCandidate(rle_encode(mask), score, box_id=index))
        return out


class FileBackend:
    """Replays interchange records from a directory, one JSON per image."""

    def __init__(self, store_dir: Path | str, dataset: DatasetIndex | None = None):
        self.store_dir = Path(store_dir)
        if not self.store_dir.is_dir():
            raise ValidationError(f"interchange directory {self.store_dir} does not exist")
        self.dataset = dataset
        self.class_table = dataset.class_table if dataset is not None else None
        self._cache: dict[str, object] = {}
        self._lock = threading.Lock()

    def _record(self, image_id: str):
        with self._lock:
            if image_id in self._cache:
                return self._cache[image_id]
        path = self.store_dir / f"{image_id}.json"
        if not path.is_file():
            raise ValidationError(f"no interchange record for image {image_id!r} in {self.store_dir}")
        rec = read_interchange(path)
        if rec.image_id != image_id:
            raise ValidationError(
                f"{path}: record is for image {rec.image_id!r}, expected {image_id!r}"
            )
        with self._lock:
            self._cache[image_id] = rec
        return rec

    def classify(self, image_id: str, class_names: list[str]) -> list[ClassPrediction]:
        rec = self._record(image_id)
        stored = dict(rec.classifier_scores)
        if self.class_table is not None:
            requested = self.class_table.resolve_all(class_names)
        else:
            requested = sorted(stored)
        return [ClassPrediction(cid, stored.get(cid, 0.0)) for cid in requested]

    def detect(
        self,
        image_id: str,
        labels: list[int],
        box_threshold: float,
        text_threshold: float,
    ) -> list[Detection]:
        if not labels:
            raise ValueError("detect requires at least one label")
        del text_threshold  # already applied when the record was produced
        rec = self._record(image_id)
        wanted = set(labels)
        return [
            Detection(det.box, det.label_text)
            for det in rec.detections
            if det.class_id in wanted and det.score >= box_threshold
        ]

    def segment_in_box(self, image_id: str, det: Detection) -> list[MaskCandidate]:
        rec = self._record(image_id)
        for index, stored in enumerate(rec.detections):
            if stored.box == det.box:
                return [
                    MaskCandidate(rle, score, box_id=index)
                    for rle, score in stored.candidates
                ]
        raise ValidationError(
            f"detection {det.box.coords} (class {det.box.class_id}) does not "
            f"belong to the stored record for image {image_id!r}"
        )
