"""Training-side numerics: losses with analytic gradients, learning-rate
schedules, and rectangle-paste sample mixing.

Losses take a float prediction raster in [0, 1] and a binary target of the
same shape, and return both the scalar and the per-pixel derivative with
respect to the prediction so the analytic gradients can be checked against
central finite differences. All arithmetic runs in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import raster
from .targets import TargetStack


@dataclass(frozen=True)
class LossParams:
    beta: float = 1.0
    eps: float = 1e-4
    gamma1: float = 0.5
    gamma2: float = 0.5
    clamp: float = 1e-7

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.gamma1 + self.gamma2 <= 0:
            raise ValueError("gamma1 + gamma2 must be > 0")
        if not 0.0 < self.clamp < 0.5:
            raise ValueError("clamp must lie in (0, 0.5)")


@dataclass(frozen=True)
class ChannelWeights:
    building: float = 1.0
    border: float = 2.0
    spacing: float = 2.0

    def __post_init__(self):
        w = self.as_tuple()
        if min(w) < 0:
            raise ValueError("channel weights must be non-negative")
        if sum(w) <= 0:
            raise ValueError("channel weights must not all be zero")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.building, self.border, self.spacing)


@dataclass(frozen=True)
class ScheduleParams:
    total_epochs: int = 100
    up_epochs: int = 40
    lr_init: float = 0.0001 / 20
    lr_max: float = 0.0001
    lr_final: float = (0.0001 / 20) / 1000
    poly_power: float = 0.9
    poly_lr0: float = 0.001

    def __post_init__(self):
        if not 0 < self.up_epochs < self.total_epochs:
            raise ValueError("need 0 < up_epochs < total_epochs")
        if not self.lr_final < self.lr_init < self.lr_max:
            raise ValueError("need lr_final < lr_init < lr_max")


def _loss_inputs(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, np.float64)
    g = raster.as_mask(gt).astype(np.float64)
    if p.shape != g.shape:
        raise ValueError(f"prediction/target dimensions differ: {p.shape} vs {g.shape}")
    if p.size == 0 or p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("prediction values must lie in [0, 1]")
    return p, g


def dice_loss(pred, gt, params: LossParams = LossParams()) -> tuple[float, np.ndarray]:
    """Soft F-beta overlap loss with smoothing eps, plus its gradient.

    With soft counts TP = sum(p*g), FP = sum(p*(1-g)), FN = sum((1-p)*g):
        loss = 1 - ((1+b^2)*TP + eps) / ((1+b^2)*TP + b^2*FN + FP + eps)
    The denominator's derivative w.r.t. any pixel is exactly 1, so the
    gradient is (num - (1+b^2)*g*den) / den^2.
    """
    p, g = _loss_inputs(pred, gt)
    b2 = params.beta * params.beta
    tp = float((p * g).sum())
    fp = float((p * (1.0 - g)).sum())
    fn = float(((1.0 - p) * g).sum())
    num = (1.0 + b2) * tp + params.eps
    den = (1.0 + b2) * tp + b2 * fn + fp + params.eps
    grad = (num - (1.0 + b2) * g * den) / (den * den)
    return 1.0 - num / den, grad


def bce_loss(pred, gt, params: LossParams = LossParams()) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy with the prediction clamped away from 0/1.

    The gradient is (-g/p + (1-g)/(1-p)) / N at unclamped pixels and 0
    where the clamp is active.
    """
    p, g = _loss_inputs(pred, gt)
    n = p.size
    pc = np.clip(p, params.clamp, 1.0 - params.clamp)
    loss = float(np.mean(-(g * np.log(pc) + (1.0 - g) * np.log1p(-pc))))
    grad = (-(g / pc) + (1.0 - g) / (1.0 - pc)) / n
    grad[(p < params.clamp) | (p > 1.0 - params.clamp)] = 0.0
    return loss, grad


def channel_loss(pred, gt, params: LossParams = LossParams()) -> tuple[float, np.ndarray]:
    """Per-channel mix gamma1 * BCE + gamma2 * Dice, with its gradient."""
    bce, bce_grad = bce_loss(pred, gt, params)
    dice, dice_grad = dice_loss(pred, gt, params)
    return (params.gamma1 * bce + params.gamma2 * dice,
            params.gamma1 * bce_grad + params.gamma2 * dice_grad)


def total_loss(losses, weights) -> float:
    """Weight-normalized sum of per-channel losses: sum(w*L) / sum(w)."""
    if isinstance(weights, ChannelWeights):
        weights = weights.as_tuple()
    weights = [float(w) for w in weights]
    losses = [float(x) for x in losses]
    if len(losses) != len(weights):
        raise ValueError(f"{len(losses)} losses but {len(weights)} weights")
    total_w = sum(weights)
    if total_w <= 0:
        raise ValueError("channel weights sum to zero")
    return sum(w * x for w, x in zip(weights, losses)) / total_w


def lr_poly(epoch, params: ScheduleParams = ScheduleParams(), recursive: bool = False) -> float:
    """Polynomial decay from poly_lr0 to 0 over total_epochs.

    The closed form lr0 * (1 - epoch/total)^power is the default; the
    literal recurrence lr_{t} = lr_{t-1} * (1 - t/total)^power is kept
    behind `recursive` for comparison (it decays far faster).
    """
    if not 0 <= epoch <= params.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {params.total_epochs}]")
    if recursive:
        lr = params.poly_lr0
        for t in range(1, int(epoch) + 1):
            lr *= (1.0 - t / params.total_epochs) ** params.poly_power
        return lr
    return params.poly_lr0 * (1.0 - epoch / params.total_epochs) ** params.poly_power


def lr_one_cycle(epoch, params: ScheduleParams = ScheduleParams()) -> float:
    """Single cosine ramp lr_init -> lr_max over up_epochs, then a cosine
    decay lr_max -> lr_final over the remaining epochs.

    Both phases are convex combinations in the cosine weight, so the
    endpoints and the junction at up_epochs are exact.
    """
    if not 0 <= epoch <= params.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {params.total_epochs}]")
    if epoch <= params.up_epochs:
        w = (1.0 - math.cos(math.pi * epoch / params.up_epochs)) / 2.0
        return params.lr_init * (1.0 - w) + params.lr_max * w
    down = params.total_epochs - params.up_epochs
    w = (1.0 + math.cos(math.pi * (epoch - params.up_epochs) / down)) / 2.0
    return params.lr_final * (1.0 - w) + params.lr_max * w


def gradient_check(pred, gt, params: LossParams = LossParams(), step: float = 1e-5) -> float:
    """Max relative error between the analytic gradients and central finite
    differences over the dice, BCE, and mixed losses.

    Pixels within `step` of 0, 1, or a clamp boundary are skipped: the
    perturbed prediction must stay a valid probability and must not straddle
    the clamp kink.
    """
    p, _ = _loss_inputs(pred, gt)
    low = max(step, params.clamp + step)
    eligible = np.flatnonzero((p > low) & (p < 1.0 - low))
    if eligible.size == 0:
        raise ValueError("no pixels far enough from the clamp boundaries to check")
    worst = 0.0
    flat = p.ravel()
    for fn in (dice_loss, bce_loss, channel_loss):
        _, grad = fn(p, gt, params)
        grad = grad.ravel()
        for i in eligible:
            bumped = flat.copy()
            bumped[i] = flat[i] + step
            hi = fn(bumped.reshape(p.shape), gt, params)[0]
            bumped[i] = flat[i] - step
            lo = fn(bumped.reshape(p.shape), gt, params)[0]
            fd = (hi - lo) / (2.0 * step)
            err = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-12)
            worst = max(worst, err)
    return worst


def _check_box(box, height: int, width: int) -> tuple[int, int, int, int]:
    r0, c0, r1, c1 = (int(v) for v in box)
    if not (0 <= r0 <= r1 <= height and 0 <= c0 <= c1 <= width):
        raise ValueError(f"box {box} exceeds the {height}x{width} canvas")
    return r0, c0, r1, c1


def cutmix(image_a, targets_a: TargetStack, image_b, targets_b: TargetStack,
           box) -> tuple[np.ndarray, TargetStack]:
    """Paste the half-open box [r0:r1, c0:c1] of sample B over sample A.

    The image and every mask channel are mixed identically; every output
    pixel comes from exactly one input, decided solely by box membership.
    """
    a = np.asarray(image_a)
    b = np.asarray(image_b)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    h, w = a.shape[-2:]
    r0, c0, r1, c1 = _check_box(box, h, w)

    def paste(x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        if x.shape[-2:] != (h, w) or x.shape != y.shape:
            raise ValueError("mask dimensions differ from the image canvas")
        out = x.copy()
        out[..., r0:r1, c0:c1] = y[..., r0:r1, c0:c1]
        return out

    mixed = TargetStack(paste(targets_a.building, targets_b.building),
                        paste(targets_a.border, targets_b.border),
                        paste(targets_a.spacing, targets_b.spacing))
    return paste(a, b), mixed


def sample_cutmix_box(height: int, width: int, rng: np.random.Generator) -> tuple[int, int, int, int]:
    """Canonical box sampler: mix ratio lam ~ U[0,1], side fractions
    sqrt(1-lam), uniform center, clipped to the canvas."""
    lam = float(rng.uniform(0.0, 1.0))
    frac = math.sqrt(1.0 - lam)
    bh = int(round(height * frac))
    bw = int(round(width * frac))
    cy = int(rng.integers(0, height))
    cx = int(rng.integers(0, width))
    r0 = cy - bh // 2
    c0 = cx - bw // 2
    return (max(0, r0), max(0, c0), min(height, r0 + bh), min(width, c0 + bw))
