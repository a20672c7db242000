"""Synthetic dataset generator for end-to-end runs and benchmarks.

Writes a ``voc_like`` directory (``classes.json`` plus ``masks/*.png``)
of small images populated with simple filled shapes.  The generator is
fully determined by its arguments: the same seed and sizes reproduce the
same bytes on disk.

Layout rules, chosen so a noise-free run can reconstruct ground truth
exactly:

* object bounding boxes are pairwise disjoint with a margin, so distinct
  objects never suppress each other and never fight over pixels;
* at most three distinct classes appear per image, matching the default
  label budget;
* every shape fills at most ~0.79 of its bounding box and splits through
  its centroid into two pieces that each cover well under half the box,
  so whole-vs-part ranking stays meaningful.  Axis-aligned rectangles
  would violate that (one half of a rectangle covers exactly half the
  box) and are deliberately absent.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from .dataio import ClassTable, DatasetIndex, atomic_write_text, load_dataset

CLASS_NAMES = ("disk", "oval", "diamond", "triangle", "wedge")

# Box-relative margin kept between object boxes; with the default 10%
# box jitter, neighbours stay far below any plausible NMS threshold.
PLACEMENT_MARGIN = 4
MIN_SIDE = 16
MAX_SIDE = 44


def _draw_shape(kind: str, width: int, height: int) -> np.ndarray:
    """Filled shape on a (height, width) grid, tested at pixel centers."""
    ys, xs = np.mgrid[0:height, 0:width]
    px = xs + 0.5
    py = ys + 0.5
    cx, cy = width / 2.0, height / 2.0
    rx, ry = width / 2.0, height / 2.0
    if kind in ("disk", "oval"):
        return ((px - cx) / rx) ** 2 + ((py - cy) / ry) ** 2 <= 1.0
    if kind == "diamond":
        return np.abs(px - cx) / rx + np.abs(py - cy) / ry <= 1.0
    if kind == "triangle":  # isoceles, apex at the top edge
        return np.abs(px - cx) / rx <= py / height
    if kind == "wedge":  # right triangle below the main diagonal
        return py / height >= px / width
    raise ValueError(f"unknown shape kind {kind!r}")


def _boxes_clear(box: tuple[int, int, int, int], placed: list[tuple[int, int, int, int]]) -> bool:
    x0, y0, x1, y1 = box
    for px0, py0, px1, py1 in placed:
        if x0 < px1 + PLACEMENT_MARGIN and px0 < x1 + PLACEMENT_MARGIN:
            if y0 < py1 + PLACEMENT_MARGIN and py0 < y1 + PLACEMENT_MARGIN:
                return False
    return True


def _render_image(rng: np.random.Generator, size: int, num_classes: int) -> np.ndarray:
    raster = np.zeros((size, size), dtype=np.uint8)
    num_objects = int(rng.integers(2, 6))
    distinct = int(rng.integers(1, min(3, num_objects) + 1))
    class_pool = rng.choice(np.arange(1, num_classes + 1), size=distinct, replace=False)
    placed: list[tuple[int, int, int, int]] = []
    for _ in range(num_objects):
        class_id = int(rng.choice(class_pool))
        for _attempt in range(500):
            w = int(rng.integers(MIN_SIDE, MAX_SIDE + 1))
            h = int(rng.integers(MIN_SIDE, MAX_SIDE + 1))
            x0 = int(rng.integers(0, size - w + 1))
            y0 = int(rng.integers(0, size - h + 1))
            box = (x0, y0, x0 + w, y0 + h)
            if _boxes_clear(box, placed):
                break
        else:
            continue  # image too crowded; keep what fit
        placed.append(box)
        shape = _draw_shape(CLASS_NAMES[(class_id - 1) % len(CLASS_NAMES)], w, h)
        raster[y0 : y0 + h, x0 : x0 + w][shape] = class_id
    return raster


def make_synthetic_dataset(
    out_dir: Path | str,
    num_images: int = 50,
    image_size: int = 128,
    num_classes: int = 5,
    seed: int = 0,
) -> DatasetIndex:
    """Write a voc_like dataset and return it loaded and validated."""
    if not 1 <= num_classes <= len(CLASS_NAMES):
        raise ValueError(f"num_classes must be 1..{len(CLASS_NAMES)}, got {num_classes}")
    if num_images < 1 or image_size < 32:
        raise ValueError("need at least one image and images of at least 32 pixels")
    out_dir = Path(out_dir)
    mask_dir = out_dir / "masks"
    mask_dir.mkdir(parents=True, exist_ok=True)
    table = ClassTable.from_names(list(CLASS_NAMES[:num_classes]))
    table.save(out_dir / "classes.json")
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(num_images):
        image_id = f"synth_{i:04d}"
        raster = _render_image(rng, image_size, num_classes)
        Image.fromarray(raster, mode="L").save(mask_dir / f"{image_id}.png")
        ids.append(image_id)
    atomic_write_text(out_dir / "split.txt", "".join(f"{i}\n" for i in ids))
    return load_dataset(out_dir, "voc_like")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m pseudoseg.synth",
        description="Write a deterministic synthetic segmentation dataset.",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--images", type=int, default=50)
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--classes", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    dataset = make_synthetic_dataset(
        args.out,
        num_images=args.images,
        image_size=args.size,
        num_classes=args.classes,
        seed=args.seed,
    )
    print(f"wrote {len(dataset)} images to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
