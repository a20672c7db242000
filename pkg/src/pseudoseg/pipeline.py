"""Pseudo-label generation: labels -> boxes -> in-box masks -> raster.

The per-image chain is:

1. pick image labels (classifier scores filtered by ``select_labels``, or
   the ground-truth label set),
2. detect boxes for those labels and suppress per-class duplicates
   (``nms_per_class``), or take tight ground-truth boxes,
3. for each box, choose among the backend's mask proposals with the
   whole-before-parts rule (``select_in_box``),
4. composite the chosen masks into one class-index raster (``compose``).

Steps 1/2 can independently fall back to ground truth, which yields the
supervision-substitution rows of the ablation table.  Everything here is
deterministic given the backend outputs and the config; per-image work is
independent and safe to fan out across threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np

from .backends import Detection, MaskCandidate
from .dataio import DatasetIndex
from .errors import ValidationError
from .maskgeom import BitMask, Box, LabelRaster, box_iou, erode_mask, rle_decode, tight_box

PREDICTED = "predicted"
GROUND_TRUTH = "ground_truth"

# rejection reasons recorded in selection traces
REASON_EMPTY = "empty mask"
REASON_LEAKS = "leaks outside box"
REASON_WHOLE = "superseded by whole mask"
REASON_GAIN = "union gain below threshold"
REASON_UNREACHED = "not reached (selection stopped)"


@dataclass(frozen=True)
class PipelineConfig:
    top_n: int = 3
    cls_score_min: float = 0.5
    box_threshold: float = 0.35
    text_threshold: float = 0.25
    nms_iou: float = 0.3
    containment_min: float = 0.85
    whole_coverage_min: float = 0.5
    union_gain_min: float = 0.01
    labels_source: str = PREDICTED
    boxes_source: str = PREDICTED
    ignore_boundary_band: int = 0

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        for name in (
            "cls_score_min",
            "box_threshold",
            "text_threshold",
            "nms_iou",
            "containment_min",
            "whole_coverage_min",
            "union_gain_min",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("labels_source", "boxes_source"):
            v = getattr(self, name)
            if v not in (PREDICTED, GROUND_TRUTH):
                raise ValueError(f"{name} must be 'predicted' or 'ground_truth', got {v!r}")
        if self.ignore_boundary_band < 0:
            raise ValueError("ignore_boundary_band must be >= 0")

    def fingerprint(self) -> str:
        """Canonical config string: version-tagged, sorted fields."""
        parts = [f"{f.name}={getattr(self, f.name)}" for f in sorted(fields(self), key=lambda f: f.name)]
        return "pipelinecfg/v1;" + ";".join(parts)

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class CandidateDecision:
    candidate_id: int
    coverage: float
    containment: float | None
    proposal_score: float
    chosen: bool
    reason: str | None

    def to_dict(self) -> dict:
        return {
            "id": self.candidate_id,
            "coverage": self.coverage,
            "containment": self.containment,
            "proposal_score": self.proposal_score,
            "status": "chosen" if self.chosen else "rejected",
            "reason": self.reason,
        }


@dataclass(frozen=True)
class SelectionTrace:
    """Full audit of one box's mask selection; every candidate appears once."""

    box: Box
    candidates: tuple[CandidateDecision, ...]
    chosen: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "box": list(self.box.coords),
            "class_id": self.box.class_id,
            "score": self.box.score,
            "candidates": [c.to_dict() for c in self.candidates],
            "chosen": list(self.chosen),
        }


def select_labels(preds: Sequence, cfg: PipelineConfig) -> list[int]:
    """Top-n classes with score >= cls_score_min; ties to the smaller id."""
    kept = [p for p in preds if p.score >= cfg.cls_score_min]
    kept.sort(key=lambda p: (-p.score, p.class_id))
    return [p.class_id for p in kept[: cfg.top_n]]


def _nms_order_key(det: Detection):
    b = det.box
    return (-b.score, b.area, b.coords, b.class_id)


def nms_per_class(dets: Sequence[Detection], nms_iou: float) -> list[Detection]:
    """Greedy per-class suppression of overlapping boxes (IoU > threshold)."""
    by_class: dict[int, list[Detection]] = {}
    for det in dets:
        by_class.setdefault(det.box.class_id, []).append(det)
    kept: list[Detection] = []
    for class_id in sorted(by_class):
        group = sorted(by_class[class_id], key=_nms_order_key)
        surviving: list[Detection] = []
        for det in group:
            if all(box_iou(det.box, k.box) <= nms_iou for k in surviving):
                surviving.append(det)
        kept.extend(surviving)
    kept.sort(key=_nms_order_key)
    return kept


def select_in_box(
    cands: Sequence[MaskCandidate],
    box: Box,
    cfg: PipelineConfig,
    image_size: tuple[int, int] | None = None,
) -> tuple[BitMask, SelectionTrace]:
    """Choose masks for one box, preferring a whole mask over part unions.

    Candidates leaking outside the box (containment below the threshold)
    are dropped first.  Survivors are ranked by how much of the box they
    cover; if the best one covers at least ``whole_coverage_min`` of the
    box it wins alone, otherwise lower-ranked masks are unioned in while
    each contributes at least ``union_gain_min`` of the box area in new
    pixels, stopping at the first that does not.  The chosen union is
    clipped to the box.  ``image_size`` (width, height) is only needed
    when the candidate list is empty.
    """
    if cands:
        w, h = cands[0].mask.width, cands[0].mask.height
        if any((c.mask.width, c.mask.height) != (w, h) for c in cands):
            raise ValueError("mask candidates must share image dimensions")
    elif image_size is not None:
        w, h = image_size
    else:
        raise ValueError("image_size is required when there are no candidates")
    if box.x0 < 0 or box.y0 < 0 or box.x1 > w or box.y1 > h:
        raise ValueError(f"box {box.coords} outside {w}x{h} image")

    window = (slice(box.y0, box.y1), slice(box.x0, box.x1))
    infos = []
    for cid, cand in enumerate(cands):
        arr = rle_decode(cand.mask).arr
        total = int(np.count_nonzero(arr))
        in_box = arr[window]
        inside = int(np.count_nonzero(in_box))
        infos.append(
            {
                "id": cid,
                "in_box": in_box,
                "coverage": inside / box.area,
                "containment": (inside / total) if total else None,
                "score": cand.proposal_score,
            }
        )

    decisions: dict[int, CandidateDecision] = {}

    def decide(info, chosen: bool, reason: str | None = None):
        decisions[info["id"]] = CandidateDecision(
            candidate_id=info["id"],
            coverage=info["coverage"],
            containment=info["containment"],
            proposal_score=info["score"],
            chosen=chosen,
            reason=reason,
        )

    survivors = []
    for info in infos:
        if info["containment"] is None:
            decide(info, False, REASON_EMPTY)
        elif info["containment"] < cfg.containment_min:
            decide(info, False, REASON_LEAKS)
        else:
            survivors.append(info)

    survivors.sort(key=lambda i: (-i["coverage"], -i["score"], i["id"]))
    union = np.zeros((box.height, box.width), dtype=bool)
    if survivors:
        top = survivors[0]
        decide(top, True)
        union |= top["in_box"]
        if top["coverage"] >= cfg.whole_coverage_min:
            for info in survivors[1:]:
                decide(info, False, REASON_WHOLE)
        else:
            min_gain = cfg.union_gain_min * box.area
            stopped = False
            for info in survivors[1:]:
                if stopped:
                    decide(info, False, REASON_UNREACHED)
                    continue
                gain = int(np.count_nonzero(info["in_box"] & ~union))
                if gain >= min_gain:
                    decide(info, True)
                    union |= info["in_box"]
                else:
                    decide(info, False, REASON_GAIN)
                    stopped = True

    out = np.zeros((h, w), dtype=bool)
    out[window] = union
    ordered = tuple(decisions[cid] for cid in range(len(cands)))
    chosen = tuple(d.candidate_id for d in ordered if d.chosen)
    return BitMask(out), SelectionTrace(box=box, candidates=ordered, chosen=chosen)


def compose(
    image_size: tuple[int, int],
    selections: Sequence[tuple[BitMask, int, float]],
    cfg: PipelineConfig,
) -> LabelRaster:
    """Paint selected masks onto a background raster; highest score wins.

    Painting runs in ascending (score, then descending area, then
    descending class id) order, so on conflicts the higher score -- and
    among equals the smaller mask, then the smaller class id -- ends up on
    top.  With ``ignore_boundary_band`` set, a band of that width just
    inside each painted region's boundary is marked ignore (255).
    """
    width, height = image_size
    raster = np.zeros((height, width), dtype=np.uint8)
    order = sorted(
        range(len(selections)),
        key=lambda i: (selections[i][2], -selections[i][0].count, -selections[i][1]),
    )
    for i in order:
        mask, class_id, _score = selections[i]
        if not 1 <= class_id <= 254:
            raise ValueError(f"selection class id {class_id} outside 1..254")
        if (mask.height, mask.width) != (height, width):
            raise ValueError("selection mask does not match image dimensions")
        if mask.count == 0:
            continue
        raster[mask.arr] = class_id
        if cfg.ignore_boundary_band > 0:
            eroded = erode_mask(mask, cfg.ignore_boundary_band)
            band = mask.arr & ~eroded.arr
            raster[band] = LabelRaster.IGNORE
    return LabelRaster(raster)


class Pipeline:
    """Binds a backend and a dataset; generates one pseudo-label per image."""

    def __init__(self, backend, dataset: DatasetIndex):
        self.backend = backend
        self.dataset = dataset
        self.class_table = dataset.class_table

    def _image_labels(self, image_id: str, cfg: PipelineConfig) -> list[int]:
        if cfg.labels_source == GROUND_TRUTH:
            return list(self.dataset.gt_label_set(image_id))
        names = [self.class_table.name_of(c) for c in self.class_table.foreground_ids()]
        preds = self.backend.classify(image_id, names)
        return select_labels(preds, cfg)

    def _detections(self, image_id: str, labels: list[int], cfg: PipelineConfig) -> list[Detection]:
        if cfg.boxes_source == GROUND_TRUTH:
            wanted = set(labels)
            out = []
            for inst in self.dataset.gt_instances(image_id):
                if inst.class_id in wanted and inst.mask.count:
                    box = tight_box(inst.mask, class_id=inst.class_id, score=1.0)
                    out.append(Detection(box, self.class_table.name_of(inst.class_id)))
            return out
        dets = self.backend.detect(image_id, labels, cfg.box_threshold, cfg.text_threshold)
        return nms_per_class(dets, cfg.nms_iou)

    def generate(
        self, image_id: str, cfg: PipelineConfig
    ) -> tuple[LabelRaster, list[SelectionTrace]]:
        rec = self.dataset.record(image_id)
        size = (rec.width, rec.height)
        labels = self._image_labels(image_id, cfg)
        if not labels:
            return LabelRaster.background(*size), []
        dets = self._detections(image_id, labels, cfg)
        selections = []
        traces = []
        for det in dets:
            cands = self.backend.segment_in_box(image_id, det)
            mask, trace = select_in_box(cands, det.box, cfg, image_size=size)
            traces.append(trace)
            if mask.count:
                selections.append((mask, det.box.class_id, det.box.score))
        return compose(size, selections, cfg), traces


def generate_dataset(
    pipeline: Pipeline, cfg: PipelineConfig, jobs: int = 1
) -> dict[str, tuple[LabelRaster, list[SelectionTrace]]]:
    """Run generate over every image; results keyed (and ordered) by id."""
    ids = pipeline.dataset.image_ids()
    if jobs <= 1:
        results = {image_id: pipeline.generate(image_id, cfg) for image_id in ids}
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {image_id: pool.submit(pipeline.generate, image_id, cfg) for image_id in ids}
            results = {image_id: fut.result() for image_id, fut in futures.items()}
    return {image_id: results[image_id] for image_id in ids}
