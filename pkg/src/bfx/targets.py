"""Ground-truth channel synthesis from polygon annotations.

Three channels are generated per image: the filled building footprints,
their 2-pixel inner borders (each polygon filled, eroded twice by a 3x3
square, and XORed with its own fill, independently per polygon), and the
spacing between close buildings (15x15 dilation, watershed division seeded
by the original buildings, separation lines cut to a Chebyshev distance of
at most 8 from the nearest building, building pixels excluded).

Rasterization is pixel-center even-odd: pixel (row i, col j) is covered
when its center (j+0.5, i+0.5) is inside the ring, counting edge crossings
strictly left of the center along the scanline. Horizontal edges never
cross, so a center on a horizontal edge is covered exactly when the
interior continues below it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import extract, raster

BORDER_EROSION_ITERATIONS = 2
BORDER_KERNEL_SIDE = 3
SPACING_DILATE_SIDE = 15
SPACING_MAX_DIST = 8

CHANNEL_NAMES = ("building", "border", "spacing")


@dataclass
class TargetStack:
    """The three ground-truth channels, all the same size.

    Freshly generated stacks satisfy border <= building and
    spacing & building == 0; stacks produced by augmentation mixing are not
    required to.
    """

    building: np.ndarray
    border: np.ndarray
    spacing: np.ndarray

    def to_probmap(self) -> np.ndarray:
        return np.stack([self.building, self.border, self.spacing]).astype(np.float32)

    @classmethod
    def from_probmap(cls, pmap) -> "TargetStack":
        arr = np.asarray(pmap)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected a (3, h, w) stack, got shape {arr.shape}")
        return cls(*((arr[i] >= 0.5).astype(np.uint8) for i in range(3)))


def rasterize_polygon(ring, height: int, width: int) -> np.ndarray:
    """Scanline even-odd fill of one ring at pixel centers (see module doc)."""
    if height < 1 or width < 1:
        raise ValueError("canvas dimensions must be >= 1")
    pts = np.asarray(ring, np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("ring must be an (n, 2) array of (x, y) vertices")
    if len(pts) >= 2 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 3:
        raise ValueError("ring has fewer than 3 vertices")

    x1, y1 = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    ymin = np.minimum(y1, y2)
    ymax = np.maximum(y1, y2)

    out = np.zeros((height, width), np.uint8)
    lo = max(0, int(np.floor(ymin.min() - 0.5)))
    hi = min(height - 1, int(np.ceil(ymax.max() - 0.5)))
    centers = np.arange(width) + 0.5
    for r in range(lo, hi + 1):
        yc = r + 0.5
        # half-open span [ymin, ymax) so shared vertices count once
        sel = (ymin <= yc) & (yc < ymax)
        if not sel.any():
            continue
        t = (yc - y1[sel]) / (y2[sel] - y1[sel])
        xs = np.sort(x1[sel] + t * (x2[sel] - x1[sel]))
        out[r] = (np.searchsorted(xs, centers, side="left") & 1).astype(np.uint8)
    return out


def make_border_mask(rings, height: int, width: int,
                     erosion_iterations: int = BORDER_EROSION_ITERATIONS,
                     kernel_side: int = BORDER_KERNEL_SIDE) -> np.ndarray:
    """Union of per-polygon borders: fill, erode, XOR, independently per ring."""
    border = np.zeros((height, width), np.uint8)
    for i, ring in enumerate(rings):
        try:
            filled = rasterize_polygon(ring, height, width)
        except ValueError as exc:
            raise ValueError(f"polygon {i}: {exc}") from exc
        eroded = raster.erode(filled, kernel_side, erosion_iterations)
        border |= raster.mask_xor(filled, eroded)
    return border


def make_spacing_mask(building, dilate_side: int = SPACING_DILATE_SIDE,
                      max_dist: int = SPACING_MAX_DIST) -> np.ndarray:
    """Separation lines between buildings at most 2*max_dist pixels apart.

    Steps: dilate the building mask; run the watershed over the dilated
    region seeded by the original building components; drop every dilated
    pixel 8-adjacent to a differently-labeled pixel; XOR against the
    dilation to keep exactly those separation-line pixels; finally cut to
    Chebyshev distance <= max_dist from a building and exclude the
    buildings themselves.
    """
    b = raster.as_mask(building)
    seeds = raster.connected_components(b, 8)
    if int(seeds.max(initial=0)) < 2:
        return np.zeros_like(b)  # no inter-label boundary can exist
    grown = raster.dilate(b, dilate_side, 1)
    basins = extract.watershed_assign(seeds, grown)

    boundary = np.zeros(b.shape, bool)
    for dr, dc in raster.NEIGHBORS_8:
        nbr = raster.shift(basins, dr, dc, np.uint32(0))
        boundary |= (basins > 0) & (nbr > 0) & (nbr != basins)
    carved = grown.copy()
    carved[boundary] = 0
    lines = raster.mask_xor(grown, carved)

    near = raster.chebyshev_distance(b) <= max_dist
    return ((lines == 1) & near & (b == 0)).astype(np.uint8)


def assemble_targets(rings, height: int, width: int,
                     erosion_iterations: int = BORDER_EROSION_ITERATIONS) -> TargetStack:
    """Build the full (building, border, spacing) stack for one image.

    The building channel is the union of the filled polygons, border
    included, so that seeds = building - border stays well defined
    downstream. Overlapping polygons union in both channels.
    """
    building = np.zeros((height, width), np.uint8)
    border = np.zeros((height, width), np.uint8)
    for i, ring in enumerate(rings):
        try:
            filled = rasterize_polygon(ring, height, width)
        except ValueError as exc:
            raise ValueError(f"polygon {i}: {exc}") from exc
        building |= filled
        eroded = raster.erode(filled, BORDER_KERNEL_SIDE, erosion_iterations)
        border |= raster.mask_xor(filled, eroded)
    return TargetStack(building, border, make_spacing_mask(building))
