import numpy as np
import pytest

from bfx import raster, targets

from _oracles import (bfs_chebyshev, disjoint_rectangles, flood_components,
                      geodesic_watershed, point_fill, window_dilate)


def rect_ring(x0, y0, x1, y1):
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], float)


# ---------------------------------------------------------------------------
# rasterize_polygon
# ---------------------------------------------------------------------------


def test_fill_unit_rectangle():
    out = targets.rasterize_polygon(rect_ring(0, 0, 4, 4), 8, 8)
    assert out.sum() == 16
    assert out[0:4, 0:4].all() and out[4:, :].sum() == 0 and out[:, 4:].sum() == 0
    assert np.array_equal(out, point_fill(rect_ring(0, 0, 4, 4), 8, 8))


def test_fill_zero_area_ring_is_empty():
    collinear = np.array([(1, 0), (1, 4), (1, 2)], float)
    assert targets.rasterize_polygon(collinear, 8, 8).sum() == 0


def test_fill_right_triangle():
    tri = np.array([(0, 0), (4, 0), (0, 4)], float)
    out = targets.rasterize_polygon(tri, 8, 8)
    assert np.array_equal(out, point_fill(tri, 8, 8))
    assert out.sum() == 10


def test_fill_rejects_short_rings():
    with pytest.raises(ValueError):
        targets.rasterize_polygon(np.array([(0, 0), (1, 1)], float), 4, 4)


def test_fill_matches_point_oracle_on_random_polygons():
    rng = np.random.default_rng(21)
    for _ in range(12):
        n = int(rng.integers(3, 8))
        ring = rng.uniform(0, 16, size=(n, 2))
        assert np.array_equal(targets.rasterize_polygon(ring, 16, 16),
                              point_fill(ring, 16, 16))


def test_fill_half_integer_ties_match_point_oracle():
    ring = rect_ring(0.5, 1.5, 4.5, 5.5)  # edges through pixel centers
    assert np.array_equal(targets.rasterize_polygon(ring, 8, 8), point_fill(ring, 8, 8))


def test_fill_accepts_explicitly_closed_ring():
    open_ring = rect_ring(1, 1, 3, 3)
    closed = np.vstack([open_ring, open_ring[:1]])
    assert np.array_equal(targets.rasterize_polygon(closed, 6, 6),
                          targets.rasterize_polygon(open_ring, 6, 6))


# ---------------------------------------------------------------------------
# make_border_mask
# ---------------------------------------------------------------------------


def test_border_of_ten_square_is_64_pixels():
    out = targets.make_border_mask([rect_ring(0, 0, 10, 10)], 16, 16)
    assert out.sum() == 64


def test_border_of_four_square_is_all_16():
    out = targets.make_border_mask([rect_ring(0, 0, 4, 4)], 8, 8)
    assert out.sum() == 16
    assert out[0:4, 0:4].all()


def test_border_empty_ring_list():
    assert targets.make_border_mask([], 8, 8).sum() == 0


def test_border_per_polygon_independence():
    rng = np.random.default_rng(3)
    for _ in range(10):
        rings, _ = disjoint_rectangles(rng, 40, 40, 4, min_side=5, max_side=10)
        batch = targets.make_border_mask(rings, 40, 40)
        union = np.zeros((40, 40), np.uint8)
        for ring in rings:
            union |= targets.make_border_mask([ring], 40, 40)
        assert np.array_equal(batch, union)


def test_border_count_equals_fill_minus_erosion_when_interior_survives():
    ring = rect_ring(2, 3, 11, 12)  # 9x9
    filled = targets.rasterize_polygon(ring, 16, 16)
    eroded = raster.erode(filled, 3, 2)
    assert eroded.sum() > 0
    border = targets.make_border_mask([ring], 16, 16)
    assert border.sum() == filled.sum() - eroded.sum()


def test_border_bad_ring_reports_index():
    rings = [rect_ring(0, 0, 4, 4), np.array([(0, 0), (1, 1)], float)]
    with pytest.raises(ValueError, match="polygon 1"):
        targets.make_border_mask(rings, 8, 8)


# ---------------------------------------------------------------------------
# make_spacing_mask
# ---------------------------------------------------------------------------


def spacing_oracle(building, dilate_side=15, max_dist=8):
    """The five-step procedure re-run on the brute-force primitives."""
    grown = window_dilate(building, dilate_side, 1)
    seeds = flood_components(building, 8)
    basins = geodesic_watershed(seeds, grown)
    h, w = building.shape
    boundary = np.zeros((h, w), bool)
    for i in range(h):
        for j in range(w):
            if basins[i, j] == 0:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii, jj = i + di, j + dj
                    if (0 <= ii < h and 0 <= jj < w and basins[ii, jj] != 0
                            and basins[ii, jj] != basins[i, j]):
                        boundary[i, j] = True
    carved = grown.copy()
    carved[boundary] = 0
    lines = grown ^ carved
    near = bfs_chebyshev(building) <= max_dist
    return ((lines == 1) & near & (building == 0)).astype(np.uint8)


def test_spacing_single_building_is_empty():
    b = np.zeros((30, 30), np.uint8)
    b[5:20, 5:20] = 1
    assert targets.make_spacing_mask(b).sum() == 0


def test_spacing_two_close_blocks_band_in_gap():
    b = np.zeros((40, 40), np.uint8)
    b[10:22, 5:17] = 1
    b[10:22, 21:33] = 1
    out = targets.make_spacing_mask(b)
    assert np.array_equal(out, spacing_oracle(b))
    assert out.sum() > 0
    assert (out & b).sum() == 0
    # the band crosses the gap between the two blocks
    gap = out[10:22, 17:21]
    assert gap.sum() > 0


def test_spacing_far_blocks_is_empty():
    b = np.zeros((30, 60), np.uint8)
    b[5:15, 2:10] = 1
    b[5:15, 50:58] = 1  # 40 columns apart; 7+7 dilation never meets
    assert targets.make_spacing_mask(b).sum() == 0


def test_spacing_matches_procedure_oracle_on_random_scenes():
    rng = np.random.default_rng(8)
    for _ in range(4):
        rings, boxes = disjoint_rectangles(rng, 36, 36, 3, min_side=5, max_side=9, gap=3)
        b = np.zeros((36, 36), np.uint8)
        for r0, c0, r1, c1 in boxes:
            b[r0:r1, c0:c1] = 1
        assert np.array_equal(targets.make_spacing_mask(b), spacing_oracle(b))


# ---------------------------------------------------------------------------
# assemble_targets
# ---------------------------------------------------------------------------


def test_assemble_single_square():
    stack = targets.assemble_targets([rect_ring(2, 2, 12, 12)], 16, 16)
    assert stack.building.sum() == 100
    assert stack.border.sum() == 64
    assert stack.spacing.sum() == 0


def test_assemble_empty_annotation():
    stack = targets.assemble_targets([], 8, 8)
    assert stack.building.sum() == 0
    assert stack.border.sum() == 0
    assert stack.spacing.sum() == 0


def test_assemble_two_close_blocks():
    rings = [rect_ring(5, 10, 17, 22), rect_ring(21, 10, 33, 22)]
    stack = targets.assemble_targets(rings, 40, 40)
    assert stack.building.sum() == 288  # two 12x12 squares
    assert stack.border.sum() == 2 * (144 - 64)  # each 12x12 erodes to 8x8
    assert stack.spacing.sum() > 0


def test_assemble_invariants_on_random_scenes():
    rng = np.random.default_rng(13)
    for _ in range(5):
        rings, _ = disjoint_rectangles(rng, 48, 48, 5, min_side=4, max_side=10)
        stack = targets.assemble_targets(rings, 48, 48)
        assert (stack.border <= stack.building).all()
        assert (stack.spacing & stack.building).sum() == 0
        if stack.spacing.any():
            d = raster.chebyshev_distance(stack.building)[stack.spacing == 1]
            assert d.min() >= 1 and d.max() <= 8


def test_assemble_channel_order_in_probmap():
    stack = targets.assemble_targets([rect_ring(1, 1, 9, 9)], 12, 12)
    pm = stack.to_probmap()
    assert pm.shape == (3, 12, 12) and pm.dtype == np.float32
    assert np.array_equal(pm[0], stack.building.astype(np.float32))
    assert np.array_equal(pm[1], stack.border.astype(np.float32))
    assert np.array_equal(pm[2], stack.spacing.astype(np.float32))
    back = targets.TargetStack.from_probmap(pm)
    assert np.array_equal(back.building, stack.building)
