"""Deterministic full-batch training loop with Adam.

Every room in the dataset contributes to every step (the datasets here are
desk-scale, one to a handful of rooms); gradients are averaged across rooms,
moments update per parameter, and the whole run is a pure function of the
dataset bytes and the seed. Divergence (non-finite loss or parameters) raises
NumericalError.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .layout import HorizonDepth, raycast_depth, rasterize_plane_mask
from .losses import LossBreakdown, combined_loss, total_loss
from .model import LayoutModel, ModelConfig
from .params import ParamStore
from .sphere import EquirectGrid
from .synth import Room


@dataclass(frozen=True)
class RunConfig:
    steps: int
    lr: float = 1e-4
    channels: int = 8
    heads: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if not self.lr > 0:
            raise ValidationError("learning rate must be positive")


class Adam:
    """First/second-moment adaptive updates (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, store: ParamStore) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, value in store.items():
            g = store.grad(name)
            m = self._m.setdefault(name, np.zeros_like(value))
            v = self._v.setdefault(name, np.zeros_like(value))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            update = self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            store.set(name, value - update)


def _room_targets(room: Room, config: ModelConfig):
    """Ground truth at the reference resolution: plane mask and horizon depth."""
    mask = rasterize_plane_mask(room.layout, config.ref_grid).mask
    hd = HorizonDepth(depth=room.depth, room_height_m=room.layout.room_height_m)
    return mask, hd


def train(model: LayoutModel, rooms: list[Room], run: RunConfig,
          trace_path=None, log=None) -> list[LossBreakdown]:
    """Optimize the model on the rooms; returns the per-step mean breakdowns.

    trace_path, when given, receives one JSON line per step with the loss
    breakdown (key "lambda" carries the fixed segmentation weight).
    """
    if not rooms:
        raise ValidationError("no rooms to train on")
    for room in rooms:
        if room.image.shape[1:] != (model.config.image_height,
                                    model.config.image_width):
            raise ValidationError(
                f"room image {room.image.shape[1:]} does not match the model "
                f"input {model.config.image_height}x{model.config.image_width}")
    targets = [_room_targets(room, model.config) for room in rooms]
    opt = Adam(lr=run.lr)
    history: list[LossBreakdown] = []
    trace_file = open(trace_path, "w") if trace_path else None
    try:
        for step in range(run.steps):
            model.store.zero_grads()
            sums = np.zeros(5)   # segment, depth, height, normal, gradient
            for room, (mask, gt_hd) in zip(rooms, targets):
                out = model.forward(room.image)
                breakdown, d_seg, d_depth, d_height = combined_loss(
                    out.seg_logits, mask, out.depth, out.height, gt_hd)
                w = 1.0 / len(rooms)
                out.backward(d_depth * w, d_height * w, d_seg * w)
                sums += w * np.array([breakdown.segment, breakdown.depth,
                                      breakdown.height, breakdown.normal,
                                      breakdown.gradient])
            mean = total_loss(sums[0], {"depth": sums[1], "height": sums[2],
                                        "normal": sums[3], "gradient": sums[4]})
            if not np.isfinite(mean.total):
                raise NumericalError(f"training diverged at step {step}")
            history.append(mean)
            opt.step(model.store)
            if trace_file:
                trace_file.write(json.dumps({"step": step, **mean.to_json()}) + "\n")
            if log and (step % max(1, run.steps // 20) == 0 or step == run.steps - 1):
                log(f"step {step:4d}  total {mean.total:.4f}  "
                    f"seg {mean.segment:.4f}  depth {mean.depth:.4f}  "
                    f"height {mean.height:.4f}")
    finally:
        if trace_file:
            trace_file.close()
    return history


def build_model_for_rooms(rooms: list[Room], run: RunConfig) -> LayoutModel:
    """Model sized to the dataset's image resolution."""
    H, W = rooms[0].image.shape[1:]
    config = ModelConfig(image_height=H, image_width=W,
                         channels=run.channels, heads=run.heads)
    return LayoutModel.build(config, seed=run.seed)


def infer_room(model: LayoutModel, image: np.ndarray) -> HorizonDepth:
    """Forward pass to a HorizonDepth prediction (no gradients kept)."""
    out = model.forward(image)
    return HorizonDepth(depth=out.depth, room_height_m=out.height)
