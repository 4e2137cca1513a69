"""Probability-map fusion: test-time-augmentation views, fold ensembling,
and thresholding.

The four supported views (identity, horizontal flip, vertical flip, 180
degree rotation) are involutions, so mapping a view back to the reference
frame applies the same transform again. Averages accumulate in float64 and
round to float32 once; the ensemble additionally sorts the per-pixel
summands so the result is independent of the order the maps arrive in.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

VIEWS = ("identity", "hflip", "vflip", "rot180")


def apply_view(arr, view: str) -> np.ndarray:
    """Transform the pixel grid of a mask (2-D) or probability stack (3-D)."""
    a = np.asarray(arr)
    if a.ndim not in (2, 3):
        raise ValueError(f"expected a 2-D mask or (c, h, w) stack, got shape {a.shape}")
    if view == "identity":
        return a.copy()
    if view == "hflip":
        return a[..., ::-1].copy()
    if view == "vflip":
        return a[..., ::-1, :].copy()
    if view == "rot180":
        return a[..., ::-1, ::-1].copy()
    raise ValueError(f"unknown view {view!r}")


def tta_average(views: Mapping[str, np.ndarray]) -> np.ndarray:
    """Align four tagged views back to the reference frame and average them.

    `views` must hold exactly the keys in VIEWS. The result does not depend
    on mapping order: views are realigned and summed in a fixed canonical
    order.
    """
    if set(views) != set(VIEWS):
        raise ValueError(f"expected exactly the views {VIEWS}, got {sorted(views)}")
    aligned = []
    shape = None
    for name in VIEWS:
        a = np.asarray(views[name], np.float32)
        if a.ndim != 3:
            raise ValueError(f"view {name!r} must be a (c, h, w) stack")
        if shape is None:
            shape = a.shape
        elif a.shape != shape:
            raise ValueError(f"view {name!r} has shape {a.shape}, expected {shape}")
        aligned.append(apply_view(a, name).astype(np.float64))
    total = aligned[0] + aligned[1] + aligned[2] + aligned[3]
    return (total / 4.0).astype(np.float32)


def ensemble_average(maps: Sequence[np.ndarray]) -> np.ndarray:
    """Pixelwise arithmetic mean of one or more probability stacks.

    Summands are sorted per pixel before accumulation, which makes the
    floating-point result invariant to the input ordering.
    """
    arrs = [np.asarray(m, np.float32) for m in maps]
    if not arrs:
        raise ValueError("ensemble_average needs at least one map")
    shape = arrs[0].shape
    if arrs[0].ndim != 3:
        raise ValueError(f"expected (c, h, w) stacks, got shape {shape}")
    for a in arrs[1:]:
        if a.shape != shape:
            raise ValueError(f"map shapes differ: {a.shape} vs {shape}")
    stacked = np.stack(arrs).astype(np.float64)
    stacked.sort(axis=0)
    return (np.add.reduce(stacked, axis=0) / len(arrs)).astype(np.float32)


def binarize(pmap, channel: int, threshold: float = 0.3) -> np.ndarray:
    """Threshold one channel of a probability stack; the comparison is
    inclusive, so a pixel exactly at the threshold maps to 1."""
    arr = np.asarray(pmap)
    if arr.ndim != 3:
        raise ValueError(f"expected a (c, h, w) stack, got shape {arr.shape}")
    if not 0 <= channel < arr.shape[0]:
        raise ValueError(f"channel {channel} out of range for {arr.shape[0]} channels")
    return (arr[channel] >= threshold).astype(np.uint8)
