"""Pixel- and object-level scoring with color-map diagnostics.

Object scoring follows the SpaceNet buildings convention: candidate
prediction/ground-truth pairs with IoU >= 0.5 are matched greedily in
descending IoU order (ties broken by smaller prediction id, then smaller
ground-truth id), each instance matched at most once; matched pairs are
true positives, leftover predictions false positives, leftover ground
truths false negatives. IoU is computed on rasterized instance supports,
not polygon geometry. F1 aggregates globally over summed counts, which is
not the mean of per-image F1 scores.

Empty-versus-empty scenes score 1.0 (an empty scene predicted empty is
correct); this convention differs between toolkits, so it is pinned here.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import raster, targets
from .extract import PolygonSet


@dataclass(frozen=True)
class EvalCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    counts: EvalCounts = EvalCounts()
    unmatched_pred: list[int] = field(default_factory=list)
    unmatched_gt: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class PixelScores:
    counts: EvalCounts
    precision: float
    recall: float
    fscore: float
    iou: float


def pixel_scores(pred, gt) -> PixelScores:
    """Pixelwise precision/recall/F-score/IoU over two masks."""
    p = raster.as_mask(pred)
    g = raster.as_mask(gt)
    if p.shape != g.shape:
        raise ValueError(f"mask dimensions differ: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & (1 - g)))
    fn = int(np.count_nonzero((1 - p) & g))
    if tp + fp + fn == 0:
        return PixelScores(EvalCounts(0, 0, 0), 1.0, 1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    fscore = 2 * tp / (2 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    return PixelScores(EvalCounts(tp, fp, fn), precision, recall, fscore, iou)


def instance_iou(a, b) -> float:
    """Intersection over union of two instance pixel supports."""
    ma = raster.as_mask(a)
    mb = raster.as_mask(b)
    if ma.shape != mb.shape:
        raise ValueError(f"mask dimensions differ: {ma.shape} vs {mb.shape}")
    union = int(np.count_nonzero(ma | mb))
    if union == 0:
        raise ValueError("both instances are empty")
    return int(np.count_nonzero(ma & mb)) / union


def _overlap_table(pred: np.ndarray, gt: np.ndarray):
    """Sparse intersection counts between nonzero pred and gt labels."""
    both = (pred > 0) & (gt > 0)
    n_gt = int(gt.max(initial=0))
    codes = pred[both].astype(np.int64) * (n_gt + 1) + gt[both].astype(np.int64)
    pairs, inter = np.unique(codes, return_counts=True)
    return pairs // (n_gt + 1), pairs % (n_gt + 1), inter


def match_instances(pred, gt, iou_threshold: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching of instance maps (see module doc)."""
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise ValueError(f"instance map dimensions differ: {p.shape} vs {g.shape}")
    p = p.astype(np.uint32)
    g = g.astype(np.uint32)

    area_p = np.bincount(p.ravel(), minlength=int(p.max(initial=0)) + 1)
    area_g = np.bincount(g.ravel(), minlength=int(g.max(initial=0)) + 1)
    pid, gid, inter = _overlap_table(p, g)

    candidates = []
    for pp, gg, ii in zip(pid, gid, inter):
        iou = int(ii) / int(area_p[pp] + area_g[gg] - ii)
        if iou >= iou_threshold:
            candidates.append((iou, int(pp), int(gg)))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    for iou, pp, gg in candidates:
        if pp in used_p or gg in used_g:
            continue
        used_p.add(pp)
        used_g.add(gg)
        pairs.append((pp, gg, iou))

    all_p = range(1, int(p.max(initial=0)) + 1)
    all_g = range(1, int(g.max(initial=0)) + 1)
    unmatched_p = [i for i in all_p if i not in used_p]
    unmatched_g = [i for i in all_g if i not in used_g]
    counts = EvalCounts(len(pairs), len(unmatched_p), len(unmatched_g))
    return MatchResult(pairs, counts, unmatched_p, unmatched_g)


def f1_from_counts(counts: EvalCounts) -> float:
    """F1 = 2TP / (2TP + FP + FN) as a percentage; empty-vs-empty is 100."""
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        return 100.0
    return 100.0 * 2 * counts.tp / denom


def aggregate_global(per_image) -> tuple[EvalCounts, float]:
    """Componentwise-sum the per-image counts and score the total."""
    total = EvalCounts(0, 0, 0)
    for c in per_image:
        total = total + c
    return total, f1_from_counts(total)


def color_map(pred, gt, match: MatchResult) -> np.ndarray:
    """Per-pixel TP/FP/FN raster: red for matched-prediction pixels, green
    for unmatched-prediction pixels, blue for unmatched ground-truth pixels.
    Overlaps compose (cyan = green+blue, magenta = red+blue); red+green is
    impossible because prediction instances are disjoint.
    """
    p = np.asarray(pred).astype(np.uint32)
    g = np.asarray(gt).astype(np.uint32)
    if p.shape != g.shape:
        raise ValueError(f"instance map dimensions differ: {p.shape} vs {g.shape}")

    matched_p = {pp for pp, _, _ in match.pairs}
    matched_g = {gg for _, gg, _ in match.pairs}
    pred_ids = set(range(1, int(p.max(initial=0)) + 1))
    gt_ids = set(range(1, int(g.max(initial=0)) + 1))
    if matched_p | set(match.unmatched_pred) != pred_ids or matched_p & set(match.unmatched_pred):
        raise ValueError("match result inconsistent with the prediction map")
    if matched_g | set(match.unmatched_gt) != gt_ids or matched_g & set(match.unmatched_gt):
        raise ValueError("match result inconsistent with the ground-truth map")

    n_p = int(p.max(initial=0))
    n_g = int(g.max(initial=0))
    tp_lut = np.zeros(n_p + 1, bool)
    for i in matched_p:
        tp_lut[i] = True
    fp_lut = np.zeros(n_p + 1, bool)
    for i in match.unmatched_pred:
        fp_lut[i] = True
    fn_lut = np.zeros(n_g + 1, bool)
    for i in match.unmatched_gt:
        fn_lut[i] = True

    rgb = np.zeros(p.shape + (3,), np.uint8)
    rgb[..., 0] = tp_lut[p] * np.uint8(255)
    rgb[..., 1] = fp_lut[p] * np.uint8(255)
    rgb[..., 2] = fn_lut[g] * np.uint8(255)
    return rgb


def export_per_image_csv(rows) -> str:
    """CSV export of per-image counts (the violin-plot backing data)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "tp", "fp", "fn"])
    for image_id, counts in rows:
        writer.writerow([image_id, counts.tp, counts.fp, counts.fn])
    return buf.getvalue()


def parse_per_image_csv(text: str) -> list[tuple[str, EvalCounts]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["image_id", "tp", "fp", "fn"]:
        raise ValueError(f"unexpected CSV header {header}")
    return [(row[0], EvalCounts(int(row[1]), int(row[2]), int(row[3]))) for row in reader if row]


def rasterize_polygon_set(ps: PolygonSet) -> np.ndarray:
    """Rebuild an instance map from polygon exteriors.

    Instances are rasterized in ascending id order (later ids overwrite on
    overlap, which cannot happen for sets produced by the extractor) and
    relabeled densely preserving that order.
    """
    labels = np.zeros((ps.height, ps.width), np.uint32)
    for inst in sorted(ps.instances, key=lambda i: i.id):
        filled = targets.rasterize_polygon(inst.exterior, ps.height, ps.width)
        labels[filled == 1] = inst.id
    used = np.unique(labels)
    used = used[used > 0]
    remap = np.zeros(int(labels.max(initial=0)) + 1, np.uint32)
    remap[used] = np.arange(1, used.size + 1, dtype=np.uint32)
    return remap[labels]
