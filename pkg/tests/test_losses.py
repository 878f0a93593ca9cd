"""Training objective: stable BCE, layout terms, weighted total."""

import numpy as np
import pytest

from panolayout.errors import ValidationError
from panolayout.layout import HorizonDepth
from panolayout.losses import (SEGMENT_WEIGHT, bce_segment, combined_loss,
                               layout_terms, resample_periodic, total_loss)


def test_bce_at_zero_logits_is_log_two(rng):
    target = (rng.uniform(size=(6, 12)) > 0.5).astype(np.float64)
    value, _ = bce_segment(np.zeros((6, 12)), target)
    assert value == pytest.approx(np.log(2.0), abs=1e-12)


def test_bce_extreme_logits_stay_finite():
    logits = np.array([[-1000.0, 1000.0], [1000.0, -1000.0]])
    target = np.array([[0.0, 1.0], [1.0, 0.0]])
    value, vjp = bce_segment(logits, target)
    assert value == pytest.approx(0.0, abs=1e-12)   # all confidently correct
    wrong, _ = bce_segment(logits, 1.0 - target)
    assert wrong == pytest.approx(1000.0, rel=1e-9)  # linear tail, no overflow
    assert np.all(np.isfinite(vjp(1.0)[0]))


def test_bce_gradient_is_sigmoid_minus_target(rng):
    logits = rng.normal(size=(4, 8))
    target = rng.uniform(size=(4, 8))
    _, vjp = bce_segment(logits, target)
    (g,) = vjp(1.0)
    sig = 1.0 / (1.0 + np.exp(-logits))
    np.testing.assert_allclose(g, (sig - target) / logits.size, atol=1e-12)


def test_bce_rejects_targets_outside_unit_interval(rng):
    with pytest.raises(ValidationError):
        bce_segment(np.zeros((2, 2)), np.full((2, 2), 1.5))


def test_total_loss_frozen_example():
    terms = {"depth": 0.4, "height": 0.3, "normal": 0.2, "gradient": 0.1}
    bd = total_loss(np.log(2.0), terms)
    assert bd.total == pytest.approx(0.75 * np.log(2.0) + 1.0, abs=1e-12)
    assert bd.total == pytest.approx(1.5198604, abs=1e-6)
    assert bd.seg_lambda == 0.75


def test_total_loss_requires_all_terms():
    with pytest.raises(ValidationError):
        total_loss(0.1, {"depth": 0.0, "height": 0.0, "normal": 0.0})


def test_breakdown_json_uses_lambda_key():
    bd = total_loss(0.2, {"depth": 1.0, "height": 0.0, "normal": 0.0,
                          "gradient": 0.0})
    obj = bd.to_json()
    assert set(obj) == {"total", "segment", "depth", "height", "normal",
                        "gradient", "lambda"}
    assert obj["lambda"] == SEGMENT_WEIGHT


def test_resample_identity(rng):
    values = rng.uniform(1.0, 5.0, size=16)
    np.testing.assert_allclose(resample_periodic(values, 16), values,
                               atol=1e-12)


def test_resample_constant_any_width():
    values = np.full(12, 2.5)
    for w in (4, 7, 12, 50):
        np.testing.assert_allclose(resample_periodic(values, w), 2.5,
                                   atol=1e-12)


def test_resample_wraps_circularly():
    # a single spike must influence both ends of the resampled sequence
    values = np.ones(8)
    values[0] = 9.0
    out = resample_periodic(values, 16)
    assert out[0] > 1.0 and out[-1] > 1.0


def test_layout_terms_zero_at_ground_truth(rng):
    depth = rng.uniform(2.0, 4.0, size=32)
    gt = HorizonDepth(depth=depth, room_height_m=2.8)
    terms, _ = layout_terms(depth, 2.8, gt)
    for key, value in terms.items():
        assert value == pytest.approx(0.0, abs=1e-12), key


def test_layout_terms_height_gradient_sign():
    gt = HorizonDepth(depth=np.full(8, 3.0), room_height_m=2.5)
    _, vjp = layout_terms(np.full(8, 3.0), 3.1, gt)
    _, dh = vjp(0.0, 1.0, 0.0, 0.0)
    assert dh == 1.0                      # predicted above gt
    _, vjp = layout_terms(np.full(8, 3.0), 2.0, gt)
    _, dh = vjp(0.0, 1.0, 0.0, 0.0)
    assert dh == -1.0


def test_combined_loss_breakdown_identity(rng):
    logits = rng.normal(size=(6, 12))
    mask = (rng.uniform(size=(6, 12)) > 0.5).astype(np.float64)
    pred_depth = rng.uniform(2.0, 4.0, size=12)
    gt = HorizonDepth(depth=rng.uniform(2.0, 4.0, size=24), room_height_m=3.0)
    bd, d_seg, d_depth, d_height = combined_loss(logits, mask, pred_depth,
                                                 2.6, gt)
    want = SEGMENT_WEIGHT * bd.segment + bd.depth + bd.height + bd.normal + bd.gradient
    assert bd.total == pytest.approx(want, abs=1e-12)
    assert d_seg.shape == logits.shape
    assert d_depth.shape == pred_depth.shape
    assert np.isscalar(d_height) or np.asarray(d_height).ndim == 0
