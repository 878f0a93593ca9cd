"""Training objective: plane-segmentation BCE plus the layout stand-in terms.

total = 0.75 * segment + (depth + height + normal + gradient), each layout
term an L1 mean: absolute depth error against the ground-truth horizon depth
resampled to the prediction width, absolute room-height error, wrapped
absolute wall-normal angle error, and absolute error of the circular central
difference of the depth sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .layout import HorizonDepth, gradients_vjp, normals_vjp

SEGMENT_WEIGHT = 0.75


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    segment: float
    depth: float
    height: float
    normal: float
    gradient: float
    seg_lambda: float = SEGMENT_WEIGHT

    def to_json(self) -> dict:
        return {"total": self.total, "segment": self.segment,
                "depth": self.depth, "height": self.height,
                "normal": self.normal, "gradient": self.gradient,
                "lambda": self.seg_lambda}


def bce_segment(logits: np.ndarray, target: np.ndarray):
    """Mean binary cross-entropy with logits, stable in both tails.

    Per element max(x, 0) - x*t + log(1 + exp(-|x|)); the gradient is
    (sigmoid(x) - t) / N. Targets must lie in [0, 1].
    """
    x = np.asarray(logits, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if x.shape != t.shape:
        raise ValidationError(f"logits {x.shape} vs target {t.shape}")
    if np.any((t < 0) | (t > 1)):
        raise ValidationError("targets must lie in [0, 1]")
    loss = float(np.mean(np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))))
    sig = 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))

    def vjp(g: float):
        return ((sig - t) * (g / x.size),)

    return loss, vjp


def resample_periodic(values: np.ndarray, width: int) -> np.ndarray:
    """Linear resample of a circular sequence to a new width (pixel centers)."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n < 2 or width < 2:
        raise ValidationError("need at least two samples")
    pos = np.mod((np.arange(width) + 0.5) * (n / width) - 0.5, n)
    i0 = np.floor(pos).astype(np.intp) % n
    w = pos - np.floor(pos)
    i1 = (i0 + 1) % n
    return (1 - w) * v[i0] + w * v[i1]


def _l1_mean(pred: np.ndarray, gt: np.ndarray):
    diff = pred - gt
    loss = float(np.mean(np.abs(diff)))
    sign = np.sign(diff) / diff.size

    def vjp(g: float):
        return (g * sign,)

    return loss, vjp


def _l1_wrapped(pred: np.ndarray, gt: np.ndarray):
    # wrap angle differences to (-pi, pi]; derivative 1 almost everywhere
    diff = np.mod(pred - gt + np.pi, 2 * np.pi) - np.pi
    loss = float(np.mean(np.abs(diff)))
    sign = np.sign(diff) / diff.size

    def vjp(g: float):
        return (g * sign,)

    return loss, vjp


def layout_terms(pred_depth: np.ndarray, pred_height: float, gt: HorizonDepth):
    """The four layout terms and a vjp onto (d_pred_depth, d_pred_height).

    The ground truth is resampled to the prediction width; its normals and
    gradients are recomputed at that width so every comparison is
    like-for-like along the same column longitudes.
    """
    pred_depth = np.asarray(pred_depth, dtype=np.float64)
    if pred_depth.ndim != 1 or pred_depth.size < 4:
        raise ValidationError("pred_depth must be a [W'>=4] vector")
    gt_depth = resample_periodic(gt.depth, pred_depth.size)

    depth_loss, vjp_d = _l1_mean(pred_depth, gt_depth)
    height_loss = float(abs(pred_height - gt.room_height_m))
    h_sign = float(np.sign(pred_height - gt.room_height_m))

    pred_normals, vjp_pn = normals_vjp(pred_depth)
    gt_normals = normals_vjp(gt_depth)[0]
    normal_loss, vjp_n = _l1_wrapped(pred_normals, gt_normals)

    pred_grad, vjp_pg = gradients_vjp(pred_depth)
    gt_grad = gradients_vjp(gt_depth)[0]
    grad_loss, vjp_g = _l1_mean(pred_grad, gt_grad)

    terms = {"depth": depth_loss, "height": height_loss,
             "normal": normal_loss, "gradient": grad_loss}

    def vjp(g_depth: float, g_height: float, g_normal: float, g_gradient: float):
        dd = vjp_d(g_depth)[0]
        dd = dd + vjp_pn(vjp_n(g_normal)[0])[0]
        dd = dd + vjp_pg(vjp_g(g_gradient)[0])[0]
        return dd, g_height * h_sign

    return terms, vjp


def total_loss(segment: float, terms: dict) -> LossBreakdown:
    """Combine the segmentation and layout terms with the fixed 0.75 weight."""
    for key in ("depth", "height", "normal", "gradient"):
        if key not in terms:
            raise ValidationError(f"layout terms missing {key!r}")
    total = SEGMENT_WEIGHT * segment + (terms["depth"] + terms["height"]
                                        + terms["normal"] + terms["gradient"])
    return LossBreakdown(total=float(total), segment=float(segment),
                         depth=float(terms["depth"]), height=float(terms["height"]),
                         normal=float(terms["normal"]), gradient=float(terms["gradient"]))


def combined_loss(seg_logits: np.ndarray, gt_mask: np.ndarray,
                  pred_depth: np.ndarray, pred_height: float, gt: HorizonDepth):
    """Full objective; returns (LossBreakdown, d_seg, d_depth, d_height)."""
    seg, vjp_seg = bce_segment(seg_logits, gt_mask)
    terms, vjp_lay = layout_terms(pred_depth, pred_height, gt)
    breakdown = total_loss(seg, terms)
    d_seg = vjp_seg(SEGMENT_WEIGHT)[0]
    d_depth, d_height = vjp_lay(1.0, 1.0, 1.0, 1.0)
    return breakdown, d_seg, d_depth, d_height
