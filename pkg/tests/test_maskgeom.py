"""Geometry primitives against hand cases, brute force, and properties."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pseudoseg.maskgeom import (
    BitMask,
    Box,
    LabelRaster,
    RleMask,
    box_iou,
    clip_mask,
    containment,
    coverage,
    dilate_mask,
    erode_mask,
    mask_iou,
    rle_decode,
    rle_encode,
    tight_box,
    union_masks,
)

from conftest import (
    brute_box_iou,
    brute_clip,
    brute_containment,
    brute_coverage,
    brute_dilate,
    brute_erode,
    brute_mask_iou,
    random_box,
    random_mask,
)

masks = hnp.arrays(np.bool_, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=24))


def mask_pairs():
    return hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=24).flatmap(
        lambda shape: st.tuples(hnp.arrays(np.bool_, shape), hnp.arrays(np.bool_, shape))
    )


def boxes_in(width, height):
    return st.tuples(
        st.integers(0, width - 1), st.integers(0, height - 1)
    ).flatmap(
        lambda xy: st.builds(
            Box,
            st.just(xy[0]),
            st.just(xy[1]),
            st.integers(xy[0] + 1, width),
            st.integers(xy[1] + 1, height),
        )
    )


def mask_and_box():
    return hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=24).flatmap(
        lambda shape: st.tuples(
            hnp.arrays(np.bool_, shape), boxes_in(shape[1], shape[0])
        )
    )


# ---------------------------------------------------------------------------
# type invariants


class TestTypes:
    def test_box_invariants(self):
        b = Box(1, 2, 4, 6, class_id=3, score=0.5)
        assert (b.width, b.height, b.area) == (3, 4, 12)
        with pytest.raises(ValueError):
            Box(4, 0, 4, 5)
        with pytest.raises(ValueError):
            Box(0, 5, 4, 5)
        with pytest.raises(ValueError):
            Box(0, 0, 4, 5, score=1.5)

    def test_bitmask_is_readonly_and_value_equal(self):
        m = BitMask(np.ones((2, 3), dtype=bool))
        assert (m.width, m.height, m.count) == (3, 2, 6)
        with pytest.raises(ValueError):
            m.arr[0, 0] = False
        assert m == BitMask(np.ones((2, 3), dtype=bool))
        assert m != BitMask.zeros(3, 2)

    def test_rle_invariants(self):
        with pytest.raises(ValueError):
            RleMask(2, 2, (3,))  # sum != w*h
        with pytest.raises(ValueError):
            RleMask(2, 2, (0, 1, 0, 3))  # interior zero
        with pytest.raises(ValueError):
            RleMask(2, 2, (-1, 5))
        RleMask(2, 2, (0, 4))  # leading zero-run is allowed

    def test_label_raster_values(self):
        LabelRaster(np.array([[0, 254], [255, 1]], dtype=np.uint8))
        r = LabelRaster.background(3, 2)
        assert r.arr.shape == (2, 3) and not r.class_ids()


# ---------------------------------------------------------------------------
# fixed examples


class TestHandCases:
    def test_box_iou_examples(self):
        assert box_iou(Box(0, 0, 10, 10), Box(0, 0, 10, 10)) == 1.0
        assert box_iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0
        assert box_iou(Box(0, 0, 10, 10), Box(5, 0, 15, 10)) == 50 / 150

    def test_mask_iou_examples(self):
        a = np.zeros((4, 4), dtype=bool)
        a[:, :2] = True  # left 2 columns
        b = np.zeros((4, 4), dtype=bool)
        b[:2, :] = True  # top 2 rows
        assert mask_iou(BitMask(a), BitMask(b)) == 4 / 12
        assert mask_iou(BitMask(a), BitMask(a)) == 1.0
        assert mask_iou(BitMask(a), BitMask(~a)) == 0.0
        assert mask_iou(BitMask.zeros(4, 4), BitMask.zeros(4, 4)) == 1.0
        with pytest.raises(ValueError):
            mask_iou(BitMask.zeros(4, 4), BitMask.zeros(5, 4))

    def test_coverage_examples(self):
        box = Box(2, 2, 12, 12)
        full = np.zeros((16, 16), dtype=bool)
        full[2:12, 2:12] = True
        assert coverage(BitMask(full), box) == 1.0
        assert coverage(BitMask.zeros(16, 16), box) == 0.0
        half = np.zeros((16, 16), dtype=bool)
        half[2:12, 2:7] = True  # left half of the box
        assert coverage(BitMask(half), box) == 0.5

    def test_containment_examples(self):
        box = Box(0, 0, 4, 8)
        inside = np.zeros((8, 8), dtype=bool)
        inside[1:3, 1:3] = True
        assert containment(BitMask(inside), box) == 1.0
        outside = np.zeros((8, 8), dtype=bool)
        outside[0:2, 5:7] = True
        assert containment(BitMask(outside), box) == 0.0
        straddle = np.zeros((8, 8), dtype=bool)
        straddle[0, 2:6] = True  # two pixels in, two out
        assert containment(BitMask(straddle), box) == 0.5
        with pytest.raises(ValueError):
            containment(BitMask.zeros(8, 8), box)

    def test_clip_examples(self):
        box = Box(2, 2, 6, 6)
        inside = np.zeros((8, 8), dtype=bool)
        inside[3:5, 3:5] = True
        assert clip_mask(BitMask(inside), box) == BitMask(inside)
        rng = np.random.default_rng(5)
        m = random_mask(rng, 8, 8)
        assert clip_mask(m, Box(0, 0, 8, 8)) == m
        straddle = np.zeros((8, 8), dtype=bool)
        straddle[4, 0:8] = True
        clipped = clip_mask(BitMask(straddle), box)
        expect = np.zeros((8, 8), dtype=bool)
        expect[4, 2:6] = True
        assert clipped == BitMask(expect)

    def test_rle_fixed_examples(self):
        assert rle_encode(BitMask.zeros(2, 2)).counts == (4,)
        assert rle_encode(BitMask.full(2, 2)).counts == (0, 4)
        m = np.zeros((2, 2), dtype=bool)
        m[0, 0] = True  # pixel (0,0); column-major order scans it first
        assert rle_encode(BitMask(m)).counts == (0, 1, 3)

    def test_tight_box(self):
        m = np.zeros((8, 8), dtype=bool)
        m[2:5, 3:7] = True
        b = tight_box(BitMask(m), class_id=4, score=0.5)
        assert b.coords == (3, 2, 7, 5) and b.class_id == 4 and b.score == 0.5
        with pytest.raises(ValueError):
            tight_box(BitMask.zeros(4, 4))

    def test_union_masks(self):
        a = np.zeros((3, 3), dtype=bool)
        a[0] = True
        b = np.zeros((3, 3), dtype=bool)
        b[:, 0] = True
        assert union_masks([BitMask(a), BitMask(b)]) == BitMask(a | b)
        with pytest.raises(ValueError):
            union_masks([])


# ---------------------------------------------------------------------------
# brute-force agreement (the acceptance run uses 500 cases; this spot-checks
# the same oracles in the regular suite)


class TestBruteForceAgreement:
    def test_overlap_measures_match_pixel_sets(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            w = int(rng.integers(1, 65))
            h = int(rng.integers(1, 65))
            a, b = random_mask(rng, w, h), random_mask(rng, w, h)
            box = random_box(rng, w, h)
            assert mask_iou(a, b) == brute_mask_iou(a, b)
            assert coverage(a, box) == brute_coverage(a, box)
            if a.count:
                assert containment(a, box) == brute_containment(a, box)
            assert clip_mask(a, box) == brute_clip(a, box)
            other = random_box(rng, w, h)
            assert box_iou(box, other) == brute_box_iou(box, other)

    def test_morphology_matches_neighbour_walk(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            m = random_mask(rng, 12, 10, density=0.3)
            for steps in (1, 2):
                assert np.array_equal(dilate_mask(m, steps).arr, brute_dilate(m.arr, steps))
                assert np.array_equal(erode_mask(m, steps).arr, brute_erode(m.arr, steps))


# ---------------------------------------------------------------------------
# properties


class TestProperties:
    @given(mask_pairs())
    def test_iou_symmetric_and_bounded(self, pair):
        a, b = BitMask(pair[0]), BitMask(pair[1])
        v = mask_iou(a, b)
        assert v == mask_iou(b, a)
        assert 0.0 <= v <= 1.0
        if a.count:
            assert mask_iou(a, a) == 1.0

    @given(masks)
    def test_rle_roundtrip(self, arr):
        m = BitMask(arr)
        r = rle_encode(m)
        assert rle_decode(r) == m
        assert sum(r.counts) == m.width * m.height
        assert all(c > 0 for c in r.counts[1:])

    @given(mask_and_box())
    def test_clip_subset_and_contained(self, mb):
        m, box = BitMask(mb[0]), mb[1]
        clipped = clip_mask(m, box)
        assert not np.any(clipped.arr & ~m.arr)
        if clipped.count:
            assert containment(clipped, box) == 1.0

    @given(mask_and_box())
    def test_union_coverage_dominates(self, mb):
        m, box = BitMask(mb[0]), mb[1]
        flipped = BitMask(m.arr[::-1].copy())
        u = union_masks([m, flipped])
        assert coverage(u, box) >= max(coverage(m, box), coverage(flipped, box))
        assert coverage(u, box) <= 1.0

    @given(masks, st.integers(1, 3))
    def test_morphology_ordering(self, arr, steps):
        m = BitMask(arr)
        assert not np.any(m.arr & ~dilate_mask(m, steps).arr)  # m subset of dilation
        assert not np.any(erode_mask(m, steps).arr & ~m.arr)  # erosion subset of m
