"""Shared fixtures and independent brute-force reference implementations.

The reference functions here deliberately avoid the library's vectorized
boolean algebra: they enumerate pixels into Python sets, so agreement
with the library is a genuine cross-check, not a tautology.
"""
import time

import numpy as np
import pytest

from pseudoseg.maskgeom import BitMask, Box
from pseudoseg.synth import make_synthetic_dataset

# ---------------------------------------------------------------------------
# pixel-set reference implementations


def pixel_set(arr: np.ndarray) -> set[tuple[int, int]]:
    return {(int(x), int(y)) for y, x in zip(*np.nonzero(np.asarray(arr)))}


def box_pixel_set(b: Box) -> set[tuple[int, int]]:
    return {(x, y) for x in range(b.x0, b.x1) for y in range(b.y0, b.y1)}


def brute_mask_iou(a: BitMask, b: BitMask) -> float:
    sa, sb = pixel_set(a.arr), pixel_set(b.arr)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def brute_box_iou(a: Box, b: Box) -> float:
    sa, sb = box_pixel_set(a), box_pixel_set(b)
    inter = len(sa & sb)
    if inter == 0:
        return 0.0
    return inter / len(sa | sb)


def brute_coverage(m: BitMask, b: Box) -> float:
    sb = box_pixel_set(b)
    return len(pixel_set(m.arr) & sb) / len(sb)


def brute_containment(m: BitMask, b: Box) -> float:
    sm = pixel_set(m.arr)
    return len(sm & box_pixel_set(b)) / len(sm)


def brute_clip(m: BitMask, b: Box) -> BitMask:
    out = np.zeros_like(m.arr)
    for x, y in pixel_set(m.arr) & box_pixel_set(b):
        out[y, x] = True
    return BitMask(out)


def brute_dilate(arr: np.ndarray, steps: int) -> np.ndarray:
    out = np.asarray(arr, dtype=bool).copy()
    h, w = out.shape
    for _ in range(steps):
        prev = out.copy()
        for y, x in zip(*np.nonzero(prev)):
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w:
                    out[ny, nx] = True
    return out


def brute_erode(arr: np.ndarray, steps: int) -> np.ndarray:
    out = np.asarray(arr, dtype=bool).copy()
    h, w = out.shape
    for _ in range(steps):
        prev = out.copy()
        for y in range(h):
            for x in range(w):
                if not prev[y, x]:
                    continue
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    ny, nx = y + dy, x + dx
                    if not (0 <= ny < h and 0 <= nx < w) or not prev[ny, nx]:
                        out[y, x] = False
                        break
    return out


def random_mask(rng: np.random.Generator, width: int, height: int, density=None) -> BitMask:
    if density is None:
        density = rng.uniform(0.05, 0.95)
    return BitMask(rng.random((height, width)) < density)


def random_box(rng: np.random.Generator, width: int, height: int) -> Box:
    x0 = int(rng.integers(0, width))
    y0 = int(rng.integers(0, height))
    x1 = int(rng.integers(x0 + 1, width + 1))
    y1 = int(rng.integers(y0 + 1, height + 1))
    return Box(x0, y0, x1, y1)


def reference_ap(flags, npos: int):
    """All-points PR integration done the long way: build every (recall,
    precision) point, then sum rectangle areas where recall advances."""
    from fractions import Fraction

    points = []
    tp = fp = 0
    for flag in flags:
        if flag:
            tp += 1
        else:
            fp += 1
        points.append((Fraction(tp, npos), Fraction(tp, tp + fp)))
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for recall, precision in points:
        if recall > prev_recall:
            ap += (recall - prev_recall) * precision
            prev_recall = recall
    return ap


def reference_pixel_counts(pred: np.ndarray, gt: np.ndarray, num_classes: int):
    """Per-pixel metric counting with explicit loops (no bincount)."""
    inter = [0] * num_classes
    pred_count = [0] * num_classes
    gt_count = [0] * num_classes
    h, w = gt.shape
    for y in range(h):
        for x in range(w):
            g = int(gt[y, x])
            if g == 255:
                continue
            p = int(pred[y, x])
            gt_count[g] += 1
            if p != 255:
                pred_count[p] += 1
            if p == g:
                inter[g] += 1
    return inter, pred_count, gt_count


def reference_nms(dets, nms_iou: float):
    """O(n^2) per-class suppression using pixel-counted box IoU."""

    def order(d):
        b = d.box
        return (-b.score, b.area, b.coords, b.class_id)

    kept = []
    for class_id in {d.box.class_id for d in dets}:
        group = sorted((d for d in dets if d.box.class_id == class_id), key=order)
        surviving = []
        for det in group:
            suppressed = False
            for winner in surviving:
                if brute_box_iou(det.box, winner.box) > nms_iou:
                    suppressed = True
                    break
            if not suppressed:
                surviving.append(det)
        kept.extend(surviving)
    return sorted(kept, key=order)


# ---------------------------------------------------------------------------
# datasets


@pytest.fixture(scope="session")
def tiny_root(tmp_path_factory):
    """Six small images on disk; enough structure for pipeline and CLI tests."""
    root = tmp_path_factory.mktemp("tiny") / "data"
    make_synthetic_dataset(root, num_images=6, image_size=64, seed=123)
    return root


@pytest.fixture(scope="session")
def tiny_dataset(tiny_root):
    from pseudoseg.dataio import load_dataset

    return load_dataset(tiny_root, "voc_like")


_SESSION_T0 = time.time()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.time() - _SESSION_T0
    verdict = "PASS" if elapsed < 120.0 else "FAIL"
    terminalreporter.write_line(
        f"{verdict}: acceptance [suite-runtime] full test suite in {elapsed:.1f}s (< 120s required)"
    )
