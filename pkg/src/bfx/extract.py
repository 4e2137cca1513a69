"""Instance extraction: border subtraction, seeded watershed, area
filtering, and exterior polygonization.

The watershed is realized as geodesic nearest-seed assignment: a
layer-synchronous multi-source breadth-first expansion with unit cost over
the 8-neighborhood, constrained to the region mask. Pixels at equal
geodesic distance from several seeds take the smallest label, which makes
the partition independent of seed enumeration order. Region components
that contain no seed receive one fresh label each, appended after the seed
labels in anchor order, so a building whose interior was fully predicted
as border is not silently dropped (the area filter still removes debris).

Exteriors are traced along pixel edges in corner coordinates. At a pinch
corner (two pixels of one 8-connected instance touching only diagonally)
the walk prefers the left turn, keeping the trace on the outer boundary at
the cost of revisiting that corner once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fusion, raster

LABEL_SENTINEL = np.uint32(0xFFFFFFFF)

# corner-walk directions: +x, +y, -x, -y (y grows downward)
_DX = (1, 0, -1, 0)
_DY = (0, 1, 0, -1)


@dataclass
class PolygonInstance:
    """One extracted building: a dense id, the exterior ring traced along
    pixel edges as (x, y) corner coordinates, and its raster support size."""

    id: int
    exterior: np.ndarray
    area_px: int


@dataclass
class PolygonSet:
    image_id: str
    height: int
    width: int
    instances: list[PolygonInstance] = field(default_factory=list)


def make_seeds(building, border) -> np.ndarray:
    """Label the building nuclei: components of building minus border."""
    b = raster.as_mask(building)
    r = raster.as_mask(border)
    if b.shape != r.shape:
        raise ValueError(f"mask dimensions differ: {b.shape} vs {r.shape}")
    return raster.connected_components(b & (1 - r), 8)


def watershed_assign(seeds, region) -> np.ndarray:
    """Expand seed labels over the region by geodesic BFS (see module doc)."""
    s = np.asarray(seeds)
    reg = raster.as_mask(region)
    if s.shape != reg.shape:
        raise ValueError(f"seed/region dimensions differ: {s.shape} vs {reg.shape}")
    if not np.issubdtype(s.dtype, np.integer):
        raise ValueError("seed map must be integer labels")
    if ((s > 0) & (reg == 0)).any():
        raise ValueError("seed pixel outside region")

    labels = s.astype(np.uint32)
    frontier = labels > 0
    unassigned = (reg == 1) & ~frontier
    while frontier.any() and unassigned.any():
        staged = np.where(frontier, labels, LABEL_SENTINEL)
        candidate = np.full(labels.shape, LABEL_SENTINEL, np.uint32)
        for dr, dc in raster.NEIGHBORS_8:
            np.minimum(candidate, raster.shift(staged, dr, dc, LABEL_SENTINEL), out=candidate)
        newly = unassigned & (candidate != LABEL_SENTINEL)
        if not newly.any():
            break
        labels[newly] = candidate[newly]
        frontier = newly
        unassigned &= ~newly

    if unassigned.any():
        # seedless region components: one fresh label each, anchor order
        extra = raster.connected_components(unassigned.astype(np.uint8), 8)
        labels[unassigned] = extra[unassigned] + np.uint32(int(s.max(initial=0)))
    return labels


def filter_small(instances, min_area: int = 140) -> np.ndarray:
    """Clear labels whose support is below `min_area` pixels (strictly), then
    relabel survivors densely by their topmost-leftmost pixel."""
    lab = np.asarray(instances)
    if lab.ndim != 2 or not np.issubdtype(lab.dtype, np.integer):
        raise ValueError("expected a 2-D integer instance map")
    n = int(lab.max(initial=0))
    if n == 0:
        return lab.astype(np.uint32)
    counts = np.bincount(lab.ravel(), minlength=n + 1)
    keep = counts >= min_area
    keep[0] = False
    cleared = np.where(keep[lab], lab, 0).astype(np.uint32)

    flat = cleared.ravel()
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        return cleared
    survivors, first = np.unique(flat[nz], return_index=True)
    order = survivors[np.argsort(nz[first], kind="stable")]
    remap = np.zeros(n + 1, np.uint32)
    remap[order] = np.arange(1, len(order) + 1, dtype=np.uint32)
    return remap[cleared]


def _trace_exterior(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Walk the outer boundary of a pixel set; `rows`/`cols` must be sorted
    row-major so (rows[0], cols[0]) is the anchor pixel."""
    r0, c0 = int(rows.min()), int(cols.min())
    g = np.zeros((int(rows.max()) - r0 + 3, int(cols.max()) - c0 + 3), bool)
    g[rows - r0 + 1, cols - c0 + 1] = True

    def has_edge(d: int, x: int, y: int) -> bool:
        if d == 0:
            return g[y, x] and not g[y - 1, x]
        if d == 1:
            return g[y, x - 1] and not g[y, x]
        if d == 2:
            return g[y - 1, x - 1] and not g[y, x - 1]
        return g[y - 1, x] and not g[y - 1, x - 1]

    # start at the anchor's top-left corner heading +x (always a boundary edge)
    sx = int(cols[0]) - c0 + 1
    sy = int(rows[0]) - r0 + 1
    verts = [(sx, sy)]
    x, y, d = sx + 1, sy, 0
    limit = 4 * rows.size + 8
    while (x, y) != (sx, sy):
        for turn in (-1, 0, 1):  # prefer left, then straight, then right
            nd = (d + turn) % 4
            if has_edge(nd, x, y):
                break
        else:
            raise AssertionError("boundary walk left the edge set")
        if nd != d:
            verts.append((x, y))
            d = nd
        x += _DX[nd]
        y += _DY[nd]
        limit -= 1
        if limit < 0:
            raise AssertionError("boundary walk failed to close")

    out = np.asarray(verts, np.int64)
    out[:, 0] += c0 - 1
    out[:, 1] += r0 - 1
    return out


def polygonize(instances, image_id: str = "") -> PolygonSet:
    """Trace the exterior ring of every labeled instance.

    Rings use pixel-corner coordinates and positive (counter-clockwise in
    x/y image axes) orientation; interior holes are ignored. area_px is the
    raster support size, so the sum over instances equals the number of
    labeled pixels.
    """
    lab = np.asarray(instances)
    if lab.ndim != 2 or not np.issubdtype(lab.dtype, np.integer):
        raise ValueError("expected a 2-D integer instance map")
    h, w = lab.shape
    result = PolygonSet(image_id, h, w)
    n = int(lab.max(initial=0))
    if n == 0:
        return result

    flat = lab.ravel()
    nz = np.flatnonzero(flat)
    order = np.argsort(flat[nz], kind="stable")  # stable keeps row-major order per label
    nz = nz[order]
    vals = flat[nz]
    starts = np.searchsorted(vals, np.arange(1, n + 1), side="left")
    ends = np.searchsorted(vals, np.arange(1, n + 1), side="right")
    for lbl in range(1, n + 1):
        idx = nz[starts[lbl - 1]:ends[lbl - 1]]
        if idx.size == 0:
            raise ValueError(f"instance labels are not dense: {lbl} unused")
        ring = _trace_exterior(idx // w, idx % w)
        result.instances.append(PolygonInstance(lbl, ring, int(idx.size)))
    return result


def single_class_instances(building, min_area: int = 140) -> np.ndarray:
    """Instance map of every non-touching blob (no border separation)."""
    comps = raster.connected_components(building, 8)
    return filter_small(comps, min_area)


def multi_class_instances(fused, threshold: float = 0.3, min_area: int = 140,
                          use_spacing: bool = True) -> np.ndarray:
    """Instance map from a fused (building, border[, spacing]) probability
    stack: threshold, carve seeds by border subtraction, grow them back by
    watershed, and drop debris below min_area."""
    pmap = np.asarray(fused, np.float32)
    if pmap.ndim != 3 or pmap.shape[0] < 2:
        raise ValueError("fused map must have at least building and border channels")
    building = fusion.binarize(pmap, 0, threshold)
    border = fusion.binarize(pmap, 1, threshold)
    if use_spacing and pmap.shape[0] >= 3:
        building = building & (1 - fusion.binarize(pmap, 2, threshold))
    seeds = make_seeds(building, border)
    grown = watershed_assign(seeds, building)
    return filter_small(grown, min_area)


def extract_single_class(building, min_area: int = 140, image_id: str = "") -> PolygonSet:
    return polygonize(single_class_instances(building, min_area), image_id)


def extract_multi_class(fused, threshold: float = 0.3, min_area: int = 140,
                        use_spacing: bool = True, image_id: str = "") -> PolygonSet:
    return polygonize(multi_class_instances(fused, threshold, min_area, use_spacing), image_id)


# ---------------------------------------------------------------------------
# GeoJSON interchange
# ---------------------------------------------------------------------------


def polygon_set_to_geojson(ps: PolygonSet) -> dict:
    """FeatureCollection with id/area_px properties; canvas dimensions ride
    along as top-level members so instance maps can be rebuilt."""
    features = []
    for inst in ps.instances:
        ring = [[int(x), int(y)] for x, y in inst.exterior]
        ring.append(ring[0])
        features.append({
            "type": "Feature",
            "properties": {"id": int(inst.id), "area_px": int(inst.area_px)},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        })
    return {
        "type": "FeatureCollection",
        "image_id": ps.image_id,
        "height": int(ps.height),
        "width": int(ps.width),
        "features": features,
    }


def polygon_set_from_geojson(doc: dict) -> PolygonSet:
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ValueError("expected a GeoJSON FeatureCollection")
    try:
        height = int(doc["height"])
        width = int(doc["width"])
    except (KeyError, TypeError, ValueError):
        raise ValueError("FeatureCollection lacks integer 'height'/'width' members") from None
    ps = PolygonSet(str(doc.get("image_id", "")), height, width)
    for k, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon" or not geom.get("coordinates"):
            raise ValueError(f"feature {k}: expected a Polygon with coordinates")
        ring = np.asarray(geom["coordinates"][0], np.float64)
        if ring.ndim != 2 or ring.shape[1] != 2:
            raise ValueError(f"feature {k}: malformed ring")
        if len(ring) >= 2 and np.array_equal(ring[0], ring[-1]):
            ring = ring[:-1]
        if len(ring) < 3:
            raise ValueError(f"feature {k}: ring has fewer than 3 vertices")
        props = feat.get("properties") or {}
        ps.instances.append(PolygonInstance(
            int(props.get("id", k + 1)), ring, int(props.get("area_px", 0))))
    return ps
