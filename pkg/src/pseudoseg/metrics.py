"""Quality measurement: per-class IoU / mIoU, classification and detection
average precision, and the supervision-substitution ablation table.

IoU accumulation is a mergeable monoid: per-image counts combine
associatively, so datasets can be evaluated in any order or batching.
Average precision uses exact rational arithmetic internally (counts are
integers and precisions are ratios), so results are reproducible to the
last bit and can be checked against an independent integration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .dataio import canonical_json
from .errors import ValidationError
from .maskgeom import Box, LabelRaster, box_iou

IGNORE = LabelRaster.IGNORE


@dataclass
class ClassCounts:
    intersection: int = 0
    union: int = 0
    pred_count: int = 0
    gt_count: int = 0


@dataclass
class EvalReport:
    per_class_iou: dict[int, float] = field(default_factory=dict)
    miou: float = 0.0
    per_class_ap: dict[int, float] = field(default_factory=dict)
    mean_ap: float = 0.0
    confusion: dict[int, ClassCounts] = field(default_factory=dict)
    config_fingerprint: str = ""
    image_count: int = 0

    def to_dict(self) -> dict:
        return {
            "per_class_iou": {str(k): v for k, v in self.per_class_iou.items()},
            "miou": self.miou,
            "per_class_ap": {str(k): v for k, v in self.per_class_ap.items()},
            "map": self.mean_ap,
            "confusion": {
                str(k): {
                    "intersection": c.intersection,
                    "union": c.union,
                    "pred_count": c.pred_count,
                    "gt_count": c.gt_count,
                }
                for k, c in self.confusion.items()
            },
            "config_fingerprint": self.config_fingerprint,
            "image_count": self.image_count,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


class ConfusionAccumulator:
    """Per-class pixel counts; background is class 0, gt 255 is skipped.

    Predicted 255 (an exported ignore band) is treated as "no prediction":
    it contributes to no class's predicted count.
    """

    def __init__(self, num_classes: int):
        if num_classes < 2:
            raise ValueError(f"need at least background plus one class, got {num_classes}")
        self.num_classes = num_classes
        # rows: gt class; columns: pred class, plus a trailing void column
        self.matrix = np.zeros((num_classes, num_classes + 1), dtype=np.int64)
        self.image_count = 0

    def update(self, pred: LabelRaster, gt: LabelRaster) -> None:
        if pred.arr.shape != gt.arr.shape:
            raise ValueError(
                f"raster dimension mismatch: pred {pred.arr.shape} vs gt {gt.arr.shape}"
            )
        c = self.num_classes
        for name, arr in (("prediction", pred.arr), ("ground truth", gt.arr)):
            bad = np.unique(arr[(arr >= c) & (arr != IGNORE)])
            if bad.size:
                raise ValidationError(
                    f"{name} raster uses class ids {bad.tolist()} outside 0..{c - 1}"
                )
        valid = gt.arr != IGNORE
        g = gt.arr[valid].astype(np.int64)
        p = pred.arr[valid].astype(np.int64)
        p[p == IGNORE] = c  # void column
        flat = np.bincount(g * (c + 1) + p, minlength=c * (c + 1))
        self.matrix += flat.reshape(c, c + 1)
        self.image_count += 1

    def merge(self, other: "ConfusionAccumulator") -> None:
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge accumulators with different class counts")
        self.matrix += other.matrix
        self.image_count += other.image_count

    def counts(self) -> dict[int, ClassCounts]:
        out = {}
        for cid in range(self.num_classes):
            inter = int(self.matrix[cid, cid])
            gt_count = int(self.matrix[cid].sum())
            pred_count = int(self.matrix[:, cid].sum())
            out[cid] = ClassCounts(
                intersection=inter,
                union=gt_count + pred_count - inter,
                pred_count=pred_count,
                gt_count=gt_count,
            )
        return out

    def report(self, config_fingerprint: str = "") -> EvalReport:
        confusion = self.counts()
        per_class = {
            cid: c.intersection / c.union for cid, c in confusion.items() if c.union > 0
        }
        miou_val = float(np.mean(list(per_class.values()))) if per_class else 0.0
        return EvalReport(
            per_class_iou=per_class,
            miou=miou_val,
            confusion=confusion,
            config_fingerprint=config_fingerprint,
            image_count=self.image_count,
        )


def miou(
    preds: Sequence[LabelRaster],
    gts: Sequence[LabelRaster],
    num_classes: int,
    config_fingerprint: str = "",
) -> EvalReport:
    """Dataset-level mean IoU over classes present in gt or prediction."""
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} predictions for {len(gts)} ground truths")
    acc = ConfusionAccumulator(num_classes)
    for pred, gt in zip(preds, gts):
        acc.update(pred, gt)
    return acc.report(config_fingerprint)


def _average_precision(flags: Sequence[bool], npos: int) -> Fraction:
    """All-points PR integration: sum of (recall step) * (precision there)."""
    if npos < 1:
        raise ValueError("average precision needs at least one positive")
    total = Fraction(0)
    tp = 0
    for rank, is_positive in enumerate(flags, start=1):
        if is_positive:
            tp += 1
            total += Fraction(tp, rank)
    return total / npos


def ap_classification(
    scores: Sequence[tuple[str, int, float]],
    gt_labels: Mapping[str, Sequence[int]],
) -> tuple[dict[int, float], float]:
    """Multi-label classification AP from (image, class, score) triples.

    Images are ranked per class by descending score with ties broken by
    ascending image id.  Classes with no positive image are excluded; the
    mean runs over the rest.
    """
    positives: dict[int, set[str]] = {}
    for image_id, classes in gt_labels.items():
        for cid in classes:
            positives.setdefault(int(cid), set()).add(image_id)
    by_class: dict[int, list[tuple[str, float]]] = {}
    for image_id, cid, score in scores:
        if image_id not in gt_labels:
            raise ValidationError(f"scored image {image_id!r} has no ground-truth labels")
        by_class.setdefault(int(cid), []).append((image_id, float(score)))

    per_class: dict[int, float] = {}
    ap_fractions = []
    for cid in sorted(positives):
        npos = len(positives[cid])
        ranked = sorted(by_class.get(cid, []), key=lambda t: (-t[1], t[0]))
        flags = [image_id in positives[cid] for image_id, _ in ranked]
        ap = _average_precision(flags, npos)
        per_class[cid] = float(ap)
        ap_fractions.append(ap)
    mean_ap = float(sum(ap_fractions) / len(ap_fractions)) if ap_fractions else 0.0
    return per_class, mean_ap


def ap_detection(
    dets: Sequence[tuple[str, Box]],
    gt_boxes: Sequence[tuple[str, Box]],
    iou_match: float = 0.5,
) -> tuple[dict[int, float], float]:
    """Detection AP with greedy box matching at an IoU threshold.

    Detections are processed in descending score order (ties by image id,
    then input order); each matches the unmatched same-image ground-truth
    box of its class with the highest IoU >= iou_match, otherwise it is a
    false positive.  Unmatched ground truths lower recall.
    """
    gt_by_class: dict[int, dict[str, list[Box]]] = {}
    for image_id, box in gt_boxes:
        gt_by_class.setdefault(box.class_id, {}).setdefault(image_id, []).append(box)

    per_class: dict[int, float] = {}
    ap_fractions = []
    for cid in sorted(gt_by_class):
        gt_map = gt_by_class[cid]
        npos = sum(len(v) for v in gt_map.values())
        preds = [
            (image_id, box, idx)
            for idx, (image_id, box) in enumerate(dets)
            if box.class_id == cid
        ]
        preds.sort(key=lambda t: (-t[1].score, t[0], t[2]))
        matched: dict[str, list[bool]] = {k: [False] * len(v) for k, v in gt_map.items()}
        flags = []
        for image_id, box, _idx in preds:
            best_iou, best_j = 0.0, -1
            for j, gt in enumerate(gt_map.get(image_id, [])):
                if matched[image_id][j]:
                    continue
                iou = box_iou(box, gt)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_match:
                matched[image_id][best_j] = True
                flags.append(True)
            else:
                flags.append(False)
        ap = _average_precision(flags, npos)
        per_class[cid] = float(ap)
        ap_fractions.append(ap)
    mean_ap = float(sum(ap_fractions) / len(ap_fractions)) if ap_fractions else 0.0
    return per_class, mean_ap


@dataclass(frozen=True)
class AblationRow:
    labels_source: str
    boxes_source: str
    pseudo_miou: float

    def to_dict(self) -> dict:
        return {
            "labels_source": self.labels_source,
            "boxes_source": self.boxes_source,
            "pseudo_miou": self.pseudo_miou,
        }


def ablation_report(pipeline, cfgs: Sequence, jobs: int = 1) -> list[AblationRow]:
    """One generate+miou run per config, on the pipeline's dataset."""
    from .pipeline import generate_dataset

    dataset = pipeline.dataset
    num_classes = dataset.class_table.num_classes
    rows = []
    for cfg in cfgs:
        results = generate_dataset(pipeline, cfg, jobs=jobs)
        preds = [raster for raster, _traces in results.values()]
        gts = [dataset.gt_raster(image_id) for image_id in results]
        report = miou(preds, gts, num_classes, cfg.fingerprint())
        rows.append(AblationRow(cfg.labels_source, cfg.boxes_source, report.miou))
    return rows
