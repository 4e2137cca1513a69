"""Exact raster primitives: square-kernel binary morphology, connected
components, and the Chebyshev distance transform.

Masks are 2-D uint8 arrays with values in {0, 1}. Instance maps are 2-D
uint32 arrays whose nonzero labels are dense in 1..N, numbered by the
topmost-then-leftmost pixel of each component. Pixels outside the canvas
count as 0 for both erosion and dilation (a mask embedded in a sea of
zeros), which keeps every operation total on valid inputs.

All functions are pure: identical inputs give byte-identical outputs, so
callers may fan work out across threads without affecting results.
"""

from __future__ import annotations

import numpy as np

NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
NEIGHBORS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))


def as_mask(a) -> np.ndarray:
    """Coerce an array to a {0,1} uint8 mask, validating its shape."""
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"mask must be 2-D and non-empty, got shape {arr.shape}")
    if arr.dtype == np.uint8 and arr.max(initial=0) <= 1:
        return arr
    return (arr != 0).astype(np.uint8)


def shift(arr: np.ndarray, dr: int, dc: int, fill) -> np.ndarray:
    """Translate a 2-D array by (dr, dc), filling vacated cells with `fill`."""
    out = np.full(arr.shape, fill, arr.dtype)
    h, w = arr.shape
    if abs(dr) >= h or abs(dc) >= w:
        return out
    src_r = slice(max(0, -dr), h - max(0, dr))
    dst_r = slice(max(0, dr), h - max(0, -dr))
    src_c = slice(max(0, -dc), w - max(0, dc))
    dst_c = slice(max(0, dc), w - max(0, -dc))
    out[dst_r, dst_c] = arr[src_r, src_c]
    return out


def check_kernel_side(side: int) -> int:
    side = int(side)
    if side < 1 or side % 2 == 0:
        raise ValueError(f"kernel side must be odd and >= 1, got {side}")
    return side


def _window_extreme(arr: np.ndarray, side: int, op, axis: int) -> np.ndarray:
    """Running min/max over a centered window along one axis, zero padded."""
    r = side // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    p = np.pad(arr, pad, constant_values=0)
    n = arr.shape[axis]
    sl = [slice(None), slice(None)]
    sl[axis] = slice(0, n)
    out = p[tuple(sl)].copy()
    for k in range(1, side):
        sl[axis] = slice(k, k + n)
        op(out, p[tuple(sl)], out=out)
    return out


def erode(mask, kernel_side: int = 3, iterations: int = 1) -> np.ndarray:
    """Binary erosion by a centered square kernel, applied `iterations` times.

    An output pixel is 1 iff every pixel under the window is 1; the window
    extends past the canvas near edges, where missing pixels count as 0.
    A square kernel is separable, so each pass is a row min followed by a
    column min, which is bit-identical to the windowed definition.
    """
    m = as_mask(mask).copy()
    side = check_kernel_side(kernel_side)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    for _ in range(iterations):
        m = _window_extreme(_window_extreme(m, side, np.minimum, 0), side, np.minimum, 1)
    return m


def dilate(mask, kernel_side: int = 3, iterations: int = 1) -> np.ndarray:
    """Binary dilation by a centered square kernel, clipped at canvas edges."""
    m = as_mask(mask).copy()
    side = check_kernel_side(kernel_side)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    for _ in range(iterations):
        m = _window_extreme(_window_extreme(m, side, np.maximum, 0), side, np.maximum, 1)
    return m


def mask_xor(a, b) -> np.ndarray:
    """Pixelwise exclusive-or of two same-sized masks."""
    ma = as_mask(a)
    mb = as_mask(b)
    if ma.shape != mb.shape:
        raise ValueError(f"mask dimensions differ: {ma.shape} vs {mb.shape}")
    return np.bitwise_xor(ma, mb)


def connected_components(mask, connectivity: int = 8) -> np.ndarray:
    """Label maximal connected regions of 1-pixels with dense labels 1..N.

    Labels are assigned by each component's anchor (topmost, then leftmost,
    pixel in row-major order), so the numbering is independent of how the
    scan is scheduled. Uses row runs merged with union-find.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    m = as_mask(mask)
    h, w = m.shape
    labels = np.zeros((h, w), np.uint32)

    runs: list[tuple[int, int, int]] = []  # (row, lo, hi) with hi exclusive
    row_first = [0] * (h + 1)
    zero = np.zeros(1, np.uint8)
    for r in range(h):
        edges = np.flatnonzero(np.diff(np.concatenate((zero, m[r], zero))))
        for i in range(0, len(edges), 2):
            runs.append((r, int(edges[i]), int(edges[i + 1])))
        row_first[r + 1] = len(runs)
    n = len(runs)
    if n == 0:
        return labels

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            # smaller root wins so the root stays the earliest run
            if ri < rj:
                parent[rj] = ri
            else:
                parent[ri] = rj

    # 8-connectivity lets runs touch diagonally, i.e. ranges expanded by 1
    reach = 1 if connectivity == 8 else 0
    for r in range(1, h):
        i, i_end = row_first[r - 1], row_first[r]
        j, j_end = row_first[r], row_first[r + 1]
        while i < i_end and j < j_end:
            _, alo, ahi = runs[i]
            _, blo, bhi = runs[j]
            if alo < bhi + reach and blo < ahi + reach:
                union(i, j)
            if ahi < bhi:
                i += 1
            else:
                j += 1

    # dense labels in first-run order == anchor order (runs are row-major)
    dense: dict[int, int] = {}
    for i in range(n):
        root = find(i)
        if root not in dense:
            dense[root] = len(dense) + 1
        r, lo, hi = runs[i]
        labels[r, lo:hi] = dense[root]
    return labels


def chebyshev_distance(mask) -> np.ndarray:
    """Per-pixel Chebyshev (8-neighbor) distance to the nearest 1-pixel.

    An all-zero mask yields the sentinel height+width+1 everywhere, which is
    larger than any attainable distance on the canvas.
    """
    m = as_mask(mask)
    h, w = m.shape
    if not m.any():
        return np.full((h, w), float(h + w + 1), np.float32)
    dist = np.zeros((h, w), np.float32)
    covered = m.copy()
    d = 0
    while True:
        remaining = covered == 0
        if not remaining.any():
            break
        d += 1
        # one 3x3 dilation grows the covered set by Chebyshev radius 1
        grown = _window_extreme(_window_extreme(covered, 3, np.maximum, 0), 3, np.maximum, 1)
        dist[(grown == 1) & remaining] = d
        covered = grown
    return dist
