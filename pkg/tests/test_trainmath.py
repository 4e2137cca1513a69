import math

import numpy as np
import pytest

from bfx import trainmath
from bfx.targets import TargetStack
from bfx.trainmath import ChannelWeights, LossParams, ScheduleParams


def finite_difference(fn, pred, gt, params, step=1e-5):
    """Central differences of a scalar loss, one pixel at a time."""
    flat = np.asarray(pred, np.float64).ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        hi = fn(bumped.reshape(pred.shape), gt, params)[0]
        bumped[i] = flat[i] - step
        lo = fn(bumped.reshape(pred.shape), gt, params)[0]
        grad[i] = (hi - lo) / (2 * step)
    return grad.reshape(pred.shape)


# ---------------------------------------------------------------------------
# dice
# ---------------------------------------------------------------------------


def test_dice_perfect_prediction_is_zero():
    gt = np.zeros((10, 10), np.uint8)
    gt[2:7, 2:7] = 1
    loss, grad = trainmath.dice_loss(gt.astype(np.float64), gt)
    assert loss == 0.0
    assert grad.shape == (10, 10)


def test_dice_all_wrong():
    pred = np.ones((10, 10), np.float64)
    gt = np.zeros((10, 10), np.uint8)
    loss, _ = trainmath.dice_loss(pred, gt)
    assert abs(loss - (1 - 1e-4 / (100 + 1e-4))) < 1e-12
    assert abs(loss - 0.999999) < 1e-6


def test_dice_half_confidence():
    pred = np.full((10, 10), 0.5)
    gt = np.ones((10, 10), np.uint8)
    loss, _ = trainmath.dice_loss(pred, gt)
    assert abs(loss - (1 - (100 + 1e-4) / (150 + 1e-4))) < 1e-12
    assert abs(loss - 0.333333) < 1e-6


def test_dice_range_and_input_validation():
    rng = np.random.default_rng(0)
    for _ in range(10):
        pred = rng.random((6, 6))
        gt = (rng.random((6, 6)) < 0.5).astype(np.uint8)
        loss, _ = trainmath.dice_loss(pred, gt)
        assert 0.0 <= loss < 1.0
    with pytest.raises(ValueError):
        trainmath.dice_loss(np.full((3, 3), 1.5), np.zeros((3, 3), np.uint8))
    with pytest.raises(ValueError):
        trainmath.dice_loss(np.zeros((3, 3)), np.zeros((3, 4), np.uint8))


# ---------------------------------------------------------------------------
# bce
# ---------------------------------------------------------------------------


def test_bce_half_everywhere_is_ln2():
    pred = np.full((8, 8), 0.5)
    gt = (np.arange(64).reshape(8, 8) % 2).astype(np.uint8)
    loss, _ = trainmath.bce_loss(pred, gt)
    assert abs(loss - math.log(2)) < 1e-12
    assert abs(loss - 0.693147) < 1e-6


def test_bce_exact_prediction_is_clamp_limited():
    gt = np.zeros((10, 10), np.uint8)
    gt[1:5, 1:5] = 1
    loss, grad = trainmath.bce_loss(gt.astype(np.float64), gt)
    assert abs(loss - (-math.log1p(-1e-7))) < 1e-15
    assert loss < 2e-7
    assert (grad == 0).all()  # every pixel sits in the clamped zone


def test_bce_single_pixel_quarter():
    loss, _ = trainmath.bce_loss(np.array([[0.25]]), np.array([[1]], np.uint8))
    assert abs(loss - math.log(4)) < 1e-12
    assert abs(loss - 1.386294) < 1e-6


def test_bce_nonnegative():
    rng = np.random.default_rng(1)
    for _ in range(10):
        pred = rng.random((5, 5))
        gt = (rng.random((5, 5)) < 0.5).astype(np.uint8)
        assert trainmath.bce_loss(pred, gt)[0] >= 0.0


# ---------------------------------------------------------------------------
# channel / total
# ---------------------------------------------------------------------------


def test_channel_perfect_prediction_near_zero():
    gt = np.zeros((8, 8), np.uint8)
    gt[2:6, 2:6] = 1
    loss, _ = trainmath.channel_loss(gt.astype(np.float64), gt)
    assert loss < 1e-6


def test_channel_half_on_ones():
    pred = np.full((10, 10), 0.5)
    gt = np.ones((10, 10), np.uint8)
    loss, _ = trainmath.channel_loss(pred, gt)
    expected = 0.5 * math.log(2) + 0.5 * (1 - (100 + 1e-4) / (150 + 1e-4))
    assert abs(loss - expected) < 1e-12
    assert abs(loss - 0.513240) < 1e-6


def test_channel_degenerate_mix_is_bce():
    rng = np.random.default_rng(2)
    pred = rng.random((6, 6))
    gt = (rng.random((6, 6)) < 0.5).astype(np.uint8)
    params = LossParams(gamma1=1.0, gamma2=0.0)
    assert trainmath.channel_loss(pred, gt, params)[0] == trainmath.bce_loss(pred, gt, params)[0]


def test_total_equal_losses_any_weights():
    assert trainmath.total_loss([0.7, 0.7, 0.7], ChannelWeights(1, 2, 2)) == pytest.approx(0.7)
    assert trainmath.total_loss([0.7, 0.7, 0.7], ChannelWeights(5, 1, 3)) == pytest.approx(0.7)


def test_total_weighted_example():
    assert trainmath.total_loss([0.6, 0.3, 0.3], ChannelWeights(1, 2, 2)) == pytest.approx(0.36)


def test_total_single_channel():
    assert trainmath.total_loss([0.42], [3.0]) == pytest.approx(0.42)


def test_total_scale_invariance_and_errors():
    losses = [0.1, 0.5, 0.9]
    a = trainmath.total_loss(losses, [1, 2, 2])
    b = trainmath.total_loss(losses, [10, 20, 20])
    assert a == pytest.approx(b)
    with pytest.raises(ValueError):
        trainmath.total_loss(losses, [0, 0, 0])
    with pytest.raises(ValueError):
        trainmath.total_loss(losses, [1, 2])
    with pytest.raises(ValueError):
        ChannelWeights(0, 0, 0)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("fn", [trainmath.dice_loss, trainmath.bce_loss, trainmath.channel_loss])
def test_analytic_gradients_match_finite_differences(fn):
    rng = np.random.default_rng(3)
    params = LossParams()
    for _ in range(6):
        pred = rng.uniform(0.05, 0.95, size=(16, 16))
        gt = (rng.random((16, 16)) < 0.5).astype(np.uint8)
        _, grad = fn(pred, gt, params)
        fd = finite_difference(fn, pred, gt, params)
        rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-12)
        assert rel.max() <= 1e-4


def test_gradient_check_helper_agrees():
    rng = np.random.default_rng(4)
    pred = rng.uniform(0.05, 0.95, size=(12, 12))
    gt = (rng.random((12, 12)) < 0.5).astype(np.uint8)
    assert trainmath.gradient_check(pred, gt) <= 1e-4


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


def test_poly_schedule_values():
    assert trainmath.lr_poly(0) == 0.001
    assert trainmath.lr_poly(100) == 0.0
    assert trainmath.lr_poly(50) == pytest.approx(0.001 * 0.5 ** 0.9, rel=1e-12)
    assert abs(trainmath.lr_poly(50) - 5.3589e-4) < 1e-7


def test_poly_recursive_variant_decays_faster():
    closed = trainmath.lr_poly(10)
    recursive = trainmath.lr_poly(10, recursive=True)
    assert trainmath.lr_poly(0, recursive=True) == 0.001
    assert recursive < closed
    assert trainmath.lr_poly(100, recursive=True) == 0.0


def test_one_cycle_endpoints_exact():
    assert trainmath.lr_one_cycle(0) == 5e-6
    assert trainmath.lr_one_cycle(40) == 1e-4
    assert trainmath.lr_one_cycle(100) == 5e-9


def test_one_cycle_midpoint_of_ramp():
    assert trainmath.lr_one_cycle(20) == pytest.approx(5.25e-5, rel=1e-12)


def test_one_cycle_continuity_and_monotone_phases():
    params = ScheduleParams()
    up = [trainmath.lr_one_cycle(e, params) for e in range(0, 41)]
    down = [trainmath.lr_one_cycle(e, params) for e in range(40, 101)]
    assert all(b > a for a, b in zip(up, up[1:]))
    assert all(b < a for a, b in zip(down, down[1:]))
    # both phase formulas agree at the junction
    w_up = (1 - math.cos(math.pi)) / 2
    assert params.lr_init * (1 - w_up) + params.lr_max * w_up == trainmath.lr_one_cycle(40)


def test_schedule_epoch_range_errors():
    with pytest.raises(ValueError):
        trainmath.lr_poly(-1)
    with pytest.raises(ValueError):
        trainmath.lr_poly(101)
    with pytest.raises(ValueError):
        trainmath.lr_one_cycle(100.5)
    with pytest.raises(ValueError):
        ScheduleParams(total_epochs=10, up_epochs=10)


# ---------------------------------------------------------------------------
# cutmix
# ---------------------------------------------------------------------------


def sample(rng, h=8, w=8):
    image = rng.random((h, w))
    masks = TargetStack(*((rng.random((h, w)) < 0.5).astype(np.uint8) for _ in range(3)))
    return image, masks


def test_cutmix_full_box_returns_b():
    rng = np.random.default_rng(5)
    ia, ma = sample(rng)
    ib, mb = sample(rng)
    img, masks = trainmath.cutmix(ia, ma, ib, mb, (0, 0, 8, 8))
    assert np.array_equal(img, ib)
    assert np.array_equal(masks.building, mb.building)
    assert np.array_equal(masks.spacing, mb.spacing)


def test_cutmix_empty_box_returns_a():
    rng = np.random.default_rng(6)
    ia, ma = sample(rng)
    ib, mb = sample(rng)
    img, masks = trainmath.cutmix(ia, ma, ib, mb, (3, 3, 3, 3))
    assert np.array_equal(img, ia)
    assert np.array_equal(masks.border, ma.border)


def test_cutmix_piecewise_definition():
    rng = np.random.default_rng(7)
    ia, ma = sample(rng)
    ib, mb = sample(rng)
    img, masks = trainmath.cutmix(ia, ma, ib, mb, (2, 2, 6, 6))  # rows/cols 2..5
    assert img[0, 0] == ia[0, 0]
    assert img[3, 3] == ib[3, 3]
    for out_ch, a_ch, b_ch in [(masks.building, ma.building, mb.building),
                               (masks.border, ma.border, mb.border),
                               (masks.spacing, ma.spacing, mb.spacing)]:
        assert out_ch[0, 0] == a_ch[0, 0]
        assert out_ch[3, 3] == b_ch[3, 3]


def test_cutmix_pixel_conservation():
    rng = np.random.default_rng(8)
    ia, ma = sample(rng)
    ib, mb = sample(rng)
    box = (1, 2, 5, 7)
    img, _ = trainmath.cutmix(ia, ma, ib, mb, box)
    inside = np.zeros((8, 8), bool)
    inside[1:5, 2:7] = True
    assert np.array_equal(img[inside], ib[inside])
    assert np.array_equal(img[~inside], ia[~inside])


def test_cutmix_box_validation():
    rng = np.random.default_rng(9)
    ia, ma = sample(rng)
    ib, mb = sample(rng)
    with pytest.raises(ValueError):
        trainmath.cutmix(ia, ma, ib, mb, (0, 0, 9, 8))
    with pytest.raises(ValueError):
        trainmath.cutmix(ia, ma, ib, mb, (4, 4, 2, 2))
    with pytest.raises(ValueError):
        trainmath.cutmix(ia, ma, rng.random((9, 9)), mb, (0, 0, 4, 4))


def test_cutmix_sampler_is_seeded_and_in_bounds():
    boxes = [trainmath.sample_cutmix_box(64, 48, np.random.default_rng(12)) for _ in range(2)]
    assert boxes[0] == boxes[1]
    rng = np.random.default_rng(13)
    for _ in range(200):
        r0, c0, r1, c1 = trainmath.sample_cutmix_box(64, 48, rng)
        assert 0 <= r0 <= r1 <= 64
        assert 0 <= c0 <= c1 <= 48
