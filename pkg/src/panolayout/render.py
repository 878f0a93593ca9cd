"""Figure rendering: layout boundaries over a panorama plus the floor plan.

Ground truth draws blue, predictions green. The report figure has the
panorama with boundary curves on the left, the floor plan on the right, and
the depth/normal/gradient sequences below.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ValidationError
from .layout import (HorizonDepth, Layout, depth_normals_gradients,
                     depth_to_boundaries, layout_from_prediction,
                     raycast_depth)
from .losses import resample_periodic
from .sphere import EquirectGrid
from .synth import render_room_image

GT_COLOR = "#1558d6"       # blue
PRED_COLOR = "#15a935"     # green


def _boundary_xy(depth: np.ndarray, height: float, camera: float,
                 grid: EquirectGrid):
    hd = HorizonDepth(depth=resample_periodic(depth, grid.width),
                      room_height_m=height)
    # a raw network height may undercut the camera; clamp like
    # layout_from_prediction does so the overlay stays drawable
    bp = depth_to_boundaries(hd, grid, min(camera, 0.5 * height))
    x = np.arange(grid.width) + 0.5
    return x, bp.ceiling_rows, bp.floor_rows


def _closed(poly: np.ndarray) -> np.ndarray:
    return np.vstack([poly, poly[:1]])


def render_report(gt_layout: Layout, pred: HorizonDepth | Layout | None = None,
                  out_path=None, grid: EquirectGrid | None = None):
    """Compose the report figure; saves to out_path when given.

    pred may be a HorizonDepth prediction, a second Layout, or None for a
    ground-truth-only sheet. Returns the matplotlib figure.
    """
    grid = grid or EquirectGrid(256, 512)
    backdrop = render_room_image(gt_layout, grid).transpose(1, 2, 0)
    gt_hd = raycast_depth(gt_layout, grid.width)

    if isinstance(pred, Layout):
        pred_hd = raycast_depth(pred, grid.width)
        pred_poly = pred.floor_polygon
    elif isinstance(pred, HorizonDepth):
        pred_hd = pred
        pred_poly = layout_from_prediction(pred).floor_polygon
    elif pred is None:
        pred_hd = None
        pred_poly = None
    else:
        raise ValidationError(f"unsupported prediction type {type(pred)!r}")

    fig = plt.figure(figsize=(12, 7.5))
    gs = fig.add_gridspec(2, 3, height_ratios=[2.0, 1.0], hspace=0.35, wspace=0.3)

    ax = fig.add_subplot(gs[0, :2])
    ax.imshow(backdrop, extent=(0, grid.width, grid.height, 0), aspect="auto")
    x, crow, frow = _boundary_xy(gt_hd.depth, gt_hd.room_height_m,
                                 gt_layout.camera_height_m, grid)
    ax.plot(x, crow, color=GT_COLOR, lw=2.0, label="ground truth")
    ax.plot(x, frow, color=GT_COLOR, lw=2.0)
    if pred_hd is not None:
        x, crow, frow = _boundary_xy(pred_hd.depth, pred_hd.room_height_m,
                                     gt_layout.camera_height_m, grid)
        ax.plot(x, crow, color=PRED_COLOR, lw=1.8, ls="--", label="prediction")
        ax.plot(x, frow, color=PRED_COLOR, lw=1.8, ls="--")
    ax.set_xlim(0, grid.width)
    ax.set_ylim(grid.height, 0)
    ax.set_title("layout boundaries")
    ax.legend(loc="upper right", fontsize=8)

    ax = fig.add_subplot(gs[0, 2])
    gtp = _closed(gt_layout.floor_polygon)
    ax.plot(gtp[:, 0], gtp[:, 1], color=GT_COLOR, lw=2.0)
    if pred_poly is not None:
        pp = _closed(pred_poly)
        ax.plot(pp[:, 0], pp[:, 1], color=PRED_COLOR, lw=1.5, ls="--")
    ax.plot([0], [0], marker="x", color="k", ms=8)
    ax.set_aspect("equal")
    ax.set_title("floor plan (m)")
    ax.grid(True, alpha=0.3)

    width = pred_hd.width if pred_hd is not None else min(grid.width, 256)
    gt_d = resample_periodic(gt_hd.depth, width)
    gt_n, gt_g = depth_normals_gradients(
        HorizonDepth(depth=gt_d, room_height_m=gt_hd.room_height_m))
    series = [("horizon depth (m)", gt_d, None),
              ("wall normal (rad)", gt_n, None),
              ("depth gradient", gt_g, None)]
    if pred_hd is not None:
        pn, pg = depth_normals_gradients(pred_hd)
        series = [("horizon depth (m)", gt_d, pred_hd.depth),
                  ("wall normal (rad)", gt_n, pn),
                  ("depth gradient", gt_g, pg)]
    for i, (title, gt_y, pred_y) in enumerate(series):
        ax = fig.add_subplot(gs[1, i])
        ax.plot(gt_y, color=GT_COLOR, lw=1.5)
        if pred_y is not None:
            ax.plot(pred_y, color=PRED_COLOR, lw=1.2, ls="--")
        ax.set_title(title, fontsize=9)
        ax.grid(True, alpha=0.3)

    if out_path is not None:
        fig.savefig(out_path, dpi=110, bbox_inches="tight")
        plt.close(fig)
    return fig
