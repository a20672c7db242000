"""Geometry and raster primitives: boxes, binary masks, RLE codec, overlaps.

Conventions used throughout the package:

* Boxes are half-open integer pixel rectangles [x0, x1) x [y0, y1), so the
  area is a whole number of pixels and adjacent boxes never share a pixel.
* Masks and rasters are 2-D numpy arrays of shape (height, width); pixel
  (x, y) lives at ``arr[y, x]`` (row-major index ``y * width + x``).
* The run-length encoding is the COCO-compatible uncompressed form:
  column-major pixel order, alternating runs of zeros and ones, with the
  first count giving the (possibly zero-length) leading run of zeros.

All types are immutable after construction and every operation is a pure
function, so values can be shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

# 4-neighborhood structuring element used for all morphology in the package
# (oracle mask noise, ignore-band computation, connected components).
CROSS_4 = ndimage.generate_binary_structure(2, 1)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Box:
    """Half-open pixel rectangle with a class label and a confidence score."""

    x0: int
    y0: int
    x1: int
    y1: int
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(
                f"degenerate box ({self.x0},{self.y0},{self.x1},{self.y1}): "
                "need x0 < x1 and y0 < y1"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"box score {self.score} outside [0, 1]")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def coords(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True, eq=False)
class BitMask:
    """Immutable binary pixel mask backed by a read-only bool array."""

    arr: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.arr)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {a.shape}")
        object.__setattr__(self, "arr", _readonly(a.astype(bool, copy=True)))

    @classmethod
    def zeros(cls, width: int, height: int) -> "BitMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BitMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.arr.shape[1]

    @property
    def height(self) -> int:
        return self.arr.shape[0]

    @property
    def count(self) -> int:
        """Number of set pixels."""
        return int(np.count_nonzero(self.arr))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMask):
            return NotImplemented
        return self.arr.shape == other.arr.shape and bool(np.array_equal(self.arr, other.arr))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class RleMask:
    """Uncompressed column-major run-length encoding of a BitMask.

    ``counts`` alternates runs of 0s and 1s; the first count is the run of
    zeros and may be zero-length.  No other count may be zero, and the
    counts must sum to width * height.
    """

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid RLE dimensions {self.width}x{self.height}")
        if any(c < 0 for c in self.counts):
            raise ValueError("negative RLE count")
        if any(c == 0 for c in self.counts[1:]):
            raise ValueError("zero-length RLE run after the first count")
        total = sum(self.counts)
        if total != self.width * self.height:
            raise ValueError(
                f"RLE counts sum to {total}, expected width*height = "
                f"{self.width * self.height}"
            )


@dataclass(frozen=True, eq=False)
class LabelRaster:
    """Per-pixel class-index image; 0 is background, 255 is ignore."""

    IGNORE = 255

    arr: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.arr)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"raster must be a non-empty 2-D array, got shape {a.shape}")
        if a.dtype != np.uint8:
            if a.min() < 0 or a.max() > 255:
                raise ValueError("raster values outside the 8-bit class-index range")
            a = a.astype(np.uint8)
        object.__setattr__(self, "arr", _readonly(a.copy()))

    @classmethod
    def background(cls, width: int, height: int) -> "LabelRaster":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.arr.shape[1]

    @property
    def height(self) -> int:
        return self.arr.shape[0]

    def class_ids(self) -> tuple[int, ...]:
        """Distinct foreground class indices present (excludes 0 and 255)."""
        vals = np.unique(self.arr)
        return tuple(int(v) for v in vals if v not in (0, LabelRaster.IGNORE))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelRaster):
            return NotImplemented
        return self.arr.shape == other.arr.shape and bool(np.array_equal(self.arr, other.arr))

    __hash__ = None  # type: ignore[assignment]


def _require_same_dims(a: BitMask, b: BitMask) -> None:
    if a.arr.shape != b.arr.shape:
        raise ValueError(f"mask dimension mismatch: {a.arr.shape} vs {b.arr.shape}")


def _require_box_inside(m: BitMask, b: Box) -> None:
    if b.x0 < 0 or b.y0 < 0 or b.x1 > m.width or b.y1 > m.height:
        raise ValueError(
            f"box ({b.x0},{b.y0},{b.x1},{b.y1}) outside "
            f"{m.width}x{m.height} mask bounds"
        )


def _box_window(m: BitMask, b: Box) -> np.ndarray:
    return m.arr[b.y0 : b.y1, b.x0 : b.x1]


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes on the integer pixel grid."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    inter = max(iw, 0) * max(ih, 0)
    union = a.area + b.area - inter
    return inter / union


def mask_iou(a: BitMask, b: BitMask) -> float:
    """Pixel IoU of two same-sized masks; IoU of two empty masks is 1.0."""
    _require_same_dims(a, b)
    inter = int(np.count_nonzero(a.arr & b.arr))
    union = int(np.count_nonzero(a.arr | b.arr))
    if union == 0:
        return 1.0
    return inter / union


def coverage(m: BitMask, b: Box) -> float:
    """Fraction of the box area that the mask explains: |m n b| / area(b)."""
    _require_box_inside(m, b)
    return int(np.count_nonzero(_box_window(m, b))) / b.area


def containment(m: BitMask, b: Box) -> float:
    """Fraction of the mask that stays inside the box: |m n b| / |m|."""
    _require_box_inside(m, b)
    total = m.count
    if total == 0:
        raise ValueError("containment undefined for an empty mask")
    return int(np.count_nonzero(_box_window(m, b))) / total


def clip_mask(m: BitMask, b: Box) -> BitMask:
    """Keep only the mask pixels inside the box."""
    _require_box_inside(m, b)
    out = np.zeros_like(m.arr)
    out[b.y0 : b.y1, b.x0 : b.x1] = _box_window(m, b)
    return BitMask(out)


def union_masks(ms: Sequence[BitMask] | Iterable[BitMask]) -> BitMask:
    """Bitwise OR of one or more same-sized masks."""
    ms = list(ms)
    if not ms:
        raise ValueError("union_masks requires at least one mask")
    acc = ms[0].arr.copy()
    for m in ms[1:]:
        _require_same_dims(ms[0], m)
        acc |= m.arr
    return BitMask(acc)


def tight_box(m: BitMask, class_id: int = 0, score: float = 1.0) -> Box:
    """Smallest box covering all set pixels of a non-empty mask."""
    ys, xs = np.nonzero(m.arr)
    if ys.size == 0:
        raise ValueError("tight_box undefined for an empty mask")
    return Box(
        int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1,
        class_id=class_id, score=score,
    )


def dilate_mask(m: BitMask, steps: int) -> BitMask:
    """Grow the mask by `steps` 4-neighborhood dilation passes."""
    if steps < 1:
        raise ValueError("dilation steps must be >= 1")
    return BitMask(ndimage.binary_dilation(m.arr, structure=CROSS_4, iterations=steps))


def erode_mask(m: BitMask, steps: int) -> BitMask:
    """Shrink the mask by `steps` 4-neighborhood erosion passes."""
    if steps < 1:
        raise ValueError("erosion steps must be >= 1")
    return BitMask(ndimage.binary_erosion(m.arr, structure=CROSS_4, iterations=steps))


def rle_encode(m: BitMask) -> RleMask:
    """Encode a mask as uncompressed column-major RLE."""
    flat = m.arr.ravel(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RleMask(m.width, m.height, tuple(counts))


def rle_decode(r: RleMask) -> BitMask:
    """Decode uncompressed column-major RLE back to a BitMask."""
    values = np.zeros(len(r.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, r.counts)
    return BitMask(flat.reshape((r.height, r.width), order="F"))
