"""Layout evaluation metrics.

Conventions: IoUs are ratios in [0, 1]; corner error is the mean L2 pixel
distance of circularly matched ceiling+floor corner projections, as a
percentage of the image diagonal; pixel error is the percentage of pixels
whose 3-way region label differs; depth metrics are RMSE in meters and the
delta < 1.25 inlier ratio (strict inequality).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import Polygon

from .errors import ValidationError
from .layout import Layout, project_corner_pixels, rasterize_labels
from .sphere import EquirectGrid


@dataclass(frozen=True)
class MetricReport:
    iou2d: float
    iou3d: float
    corner_error_pct: float | None   # None when corner counts differ
    pixel_error_pct: float
    rmse: float
    delta_125: float

    def to_json(self) -> dict:
        return {"2DIoU": self.iou2d, "3DIoU": self.iou3d,
                "CE": self.corner_error_pct, "PE": self.pixel_error_pct,
                "RMSE": self.rmse, "delta_1.25": self.delta_125}


def _polygon(layout: Layout) -> Polygon:
    p = Polygon(layout.floor_polygon)
    if not p.is_valid or p.area <= 0:
        raise ValidationError("layout polygon is not a valid area")
    return p


def iou2d(a: Layout, b: Layout) -> float:
    """Floor-plan intersection over union."""
    pa, pb = _polygon(a), _polygon(b)
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    if union <= 0:
        raise ValidationError("degenerate polygon union")
    return float(inter / union)


def iou3d(a: Layout, b: Layout) -> float:
    """Volume IoU of the extruded rooms (floors aligned at y = 0)."""
    pa, pb = _polygon(a), _polygon(b)
    inter_area = pa.intersection(pb).area
    ha, hb = a.room_height_m, b.room_height_m
    inter = inter_area * min(ha, hb)
    union = pa.area * ha + pb.area * hb - inter
    if union <= 0:
        raise ValidationError("degenerate room volumes")
    return float(inter / union)


def corner_error(a: Layout, b: Layout, grid: EquirectGrid) -> float:
    """Mean matched corner distance in pixels, % of the image diagonal.

    Both layouts must have the same corner count; the matching minimizes the
    summed distance over circular shifts of the vertex order (both polygons
    are CCW so no reversal is searched). Column distances wrap.
    """
    if a.num_corners != b.num_corners:
        raise ValidationError(
            f"corner counts differ: {a.num_corners} vs {b.num_corners}")
    pa = project_corner_pixels(a, grid)   # [2K, 2] ceiling block then floor block
    pb = project_corner_pixels(b, grid)
    K = a.num_corners
    best = math.inf
    for shift in range(K):
        idx = (np.arange(K) + shift) % K
        perm = np.concatenate([idx, idx + K])
        dr = pa[:, 0] - pb[perm, 0]
        dc = np.abs(pa[:, 1] - pb[perm, 1])
        dc = np.minimum(dc, grid.width - dc)
        cost = float(np.mean(np.hypot(dr, dc)))
        best = min(best, cost)
    return 100.0 * best / grid.diagonal


def pixel_error(a: Layout, b: Layout, grid: EquirectGrid) -> float:
    """Percentage of pixels whose ceiling/wall/floor label differs."""
    la = rasterize_labels(a, grid)
    lb = rasterize_labels(b, grid)
    return 100.0 * float(np.mean(la != lb))


def depth_metrics(pred_depth: np.ndarray, gt_depth: np.ndarray) -> tuple[float, float]:
    """(RMSE, delta<1.25 ratio) between per-column depth sequences."""
    p = np.asarray(pred_depth, dtype=np.float64)
    g = np.asarray(gt_depth, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 1:
        raise ValidationError(f"depth shapes differ: {p.shape} vs {g.shape}")
    if np.any(p <= 0) or np.any(g <= 0):
        raise ValidationError("depths must be positive")
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    ratio = np.maximum(p / g, g / p)
    delta = float(np.mean(ratio < 1.25))
    return rmse, delta


def evaluate_pair(pred: Layout, gt: Layout, grid: EquirectGrid,
                  pred_depth: np.ndarray, gt_depth: np.ndarray) -> MetricReport:
    """All metrics for one (prediction, ground-truth) pair.

    Corner error needs equal corner counts (a raw W-gon prediction vs a K-gon
    room does not qualify) and is reported as None otherwise.
    """
    try:
        ce = corner_error(pred, gt, grid)
    except ValidationError:
        ce = None
    rmse, delta = depth_metrics(pred_depth, gt_depth)
    return MetricReport(iou2d=iou2d(pred, gt), iou3d=iou3d(pred, gt),
                        corner_error_pct=ce,
                        pixel_error_pct=pixel_error(pred, gt, grid),
                        rmse=rmse, delta_125=delta)


def mean_report(reports: list[MetricReport]) -> MetricReport:
    """Field-wise mean; corner error averages over the pairs that have one."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    ces = [r.corner_error_pct for r in reports if r.corner_error_pct is not None]
    return MetricReport(
        iou2d=float(np.mean([r.iou2d for r in reports])),
        iou3d=float(np.mean([r.iou3d for r in reports])),
        corner_error_pct=float(np.mean(ces)) if ces else None,
        pixel_error_pct=float(np.mean([r.pixel_error_pct for r in reports])),
        rmse=float(np.mean([r.rmse for r in reports])),
        delta_125=float(np.mean([r.delta_125 for r in reports])))
