"""Synthetic Manhattan-style rooms: generation, shading, dataset io.

Rooms are axis-aligned rectangles with up to four rectangular corner notches
(one per corner), giving exactly 4, 6, 8, 10 or 12 corners. Each notch stays
strictly inside its corner quadrant relative to the camera, which keeps the
polygon star-shaped about the origin, so the horizon-depth view is lossless.

Rendering is deterministic closed-form shading of the three regions (region
tone, wall-normal hue, depth attenuation, darkened boundaries); no RNG and no
timestamps touch the output files, so a dataset is bit-reproducible from its
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .layout import (DEFAULT_CAMERA_HEIGHT, Layout, depth_normals_gradients,
                     depth_to_boundaries, layout_from_json, layout_to_json,
                     prediction_to_json, raycast_depth, rasterize_labels,
                     save_json, load_json)
from .sphere import EquirectGrid


@dataclass(frozen=True)
class SceneSpec:
    """Knobs of the synthetic-room distribution."""

    corners: int = 4                       # 4, 6, 8, 10 or 12
    extent_range_m: tuple = (3.2, 8.0)     # full side lengths of the base rectangle
    height_range_m: tuple = (2.6, 3.4)
    camera_height_m: float = DEFAULT_CAMERA_HEIGHT
    margin_m: float = 0.7                  # camera clearance to every wall
    notch_min_m: float = 0.45

    def __post_init__(self):
        if self.corners not in (4, 6, 8, 10, 12):
            raise ValidationError(f"corner count must be one of 4/6/8/10/12, "
                                  f"got {self.corners}")
        lo, hi = self.extent_range_m
        if not (2 * self.margin_m + 2 * self.notch_min_m < lo <= hi):
            raise ValidationError("extent range too small for margins")
        hlo, hhi = self.height_range_m
        if not (self.camera_height_m < hlo <= hhi):
            raise ValidationError("height range must exceed the camera height")


def _splice_notch(corner: int, cx: float, cz: float, w: float, d: float):
    """Vertices replacing a rectangle corner, in CCW trace order.

    Corners are numbered CCW from (xmin, zmin): 0 (xmin,zmin), 1 (xmax,zmin),
    2 (xmax,zmax), 3 (xmin,zmax); (w, d) is the notch size along (x, z).
    """
    if corner == 0:
        return [(cx, cz + d), (cx + w, cz + d), (cx + w, cz)]
    if corner == 1:
        return [(cx - w, cz), (cx - w, cz + d), (cx, cz + d)]
    if corner == 2:
        return [(cx, cz - d), (cx - w, cz - d), (cx - w, cz)]
    return [(cx + w, cz), (cx + w, cz - d), (cx, cz - d)]


def sample_layout(rng: np.random.Generator, spec: SceneSpec) -> Layout:
    """Draw one room; rejection-samples until the layout validates."""
    for _ in range(200):
        ex = rng.uniform(*spec.extent_range_m)
        ez = rng.uniform(*spec.extent_range_m)
        # split each extent so the camera keeps its margin to all four walls
        fx = rng.uniform(spec.margin_m / ex, 1 - spec.margin_m / ex)
        fz = rng.uniform(spec.margin_m / ez, 1 - spec.margin_m / ez)
        xmin, xmax = -fx * ex, (1 - fx) * ex
        zmin, zmax = -fz * ez, (1 - fz) * ez

        n_notches = (spec.corners - 4) // 2
        corners = list(rng.choice(4, size=n_notches, replace=False)) if n_notches else []
        base = [(xmin, zmin), (xmax, zmin), (xmax, zmax), (xmin, zmax)]
        pts: list[tuple] = []
        ok = True
        for ci, (cx, cz) in enumerate(base):
            if ci not in corners:
                pts.append((cx, cz))
                continue
            # the notch must stop short of the camera axes (keeps the room
            # star-shaped about the origin) and of the side midpoints
            wmax = min(abs(cx) - spec.margin_m, 0.45 * (xmax - xmin))
            dmax = min(abs(cz) - spec.margin_m, 0.45 * (zmax - zmin))
            if wmax <= spec.notch_min_m or dmax <= spec.notch_min_m:
                ok = False
                break
            w = rng.uniform(spec.notch_min_m, wmax)
            d = rng.uniform(spec.notch_min_m, dmax)
            pts.extend(_splice_notch(ci, cx, cz, w, d))
        if not ok:
            continue
        height = rng.uniform(*spec.height_range_m)
        try:
            layout = Layout(floor_polygon=np.asarray(pts, dtype=np.float64),
                            room_height_m=height,
                            camera_height_m=spec.camera_height_m)
        except ValidationError:
            continue
        if layout.num_corners != spec.corners:
            continue
        return layout
    raise ValidationError("room sampling failed to converge")


# ---------------------------------------------------------------------------
# deterministic shading

_CEILING_TONE = np.array([0.82, 0.46, 0.30])
_FLOOR_TONE = np.array([0.22, 0.62, 0.78])


def render_room_image(layout: Layout, grid: EquirectGrid) -> np.ndarray:
    """Closed-form panorama of a room, [3, H, W] float64 in [0, 1].

    Ceiling and floor get flat tones; walls encode the normal angle in the
    first two channels and depth attenuation in the third; pixels within
    1.5 rows of a boundary curve darken. The shading is arbitrary but rich
    enough that layouts are recoverable from images by a small model.
    """
    labels = rasterize_labels(layout, grid)
    hd = raycast_depth(layout, grid.width)
    normals, _ = depth_normals_gradients(hd)
    bp = depth_to_boundaries(hd, grid, layout.camera_height_m)

    img = np.empty((3, grid.height, grid.width), dtype=np.float64)
    img[:] = _CEILING_TONE[:, None, None]
    floor = labels == 2
    img[:, floor] = _FLOOR_TONE[:, None]

    wall = labels == 1
    wall_r = 0.5 + 0.45 * np.sin(normals)[None, :]
    wall_g = 0.5 + 0.45 * np.cos(normals)[None, :]
    wall_b = 1.0 / (1.0 + hd.depth / 4.0)[None, :]
    for c, plane in enumerate((wall_r, wall_g, wall_b)):
        chan = img[c]
        chan[wall] = np.broadcast_to(plane, wall.shape)[wall]

    centers = np.arange(grid.height, dtype=np.float64)[:, None] + 0.5
    near = (np.abs(centers - bp.ceiling_rows[None, :]) < 1.5) | \
           (np.abs(centers - bp.floor_rows[None, :]) < 1.5)
    img[:, near] *= 0.35
    return img


def image_to_png(img: np.ndarray, path) -> None:
    arr = np.clip(np.asarray(img), 0.0, 1.0)
    byte = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(byte, mode="RGB").save(path, format="PNG")


def png_to_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def mask_to_png(mask: np.ndarray, path) -> None:
    Image.fromarray((np.asarray(mask) > 0.5).astype(np.uint8) * 255,
                    mode="L").save(path, format="PNG")


def png_to_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return (arr > 127).astype(np.float64)


# ---------------------------------------------------------------------------
# dataset layout on disk: one directory per room


@dataclass(frozen=True)
class Room:
    layout: Layout
    image: np.ndarray            # [3, H, W]
    mask: np.ndarray             # [H, W] horizontal-plane mask
    depth: np.ndarray            # [W] GT horizon depth at image width


def generate_dataset(out_dir, n_rooms: int, spec: SceneSpec,
                     grid: EquirectGrid, seed: int = 0) -> list[Path]:
    """Write n_rooms room directories; returns their paths in order."""
    if n_rooms < 1:
        raise ValidationError("need at least one room")
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_rooms):
        layout = sample_layout(rng, spec)
        room_dir = out_dir / f"room_{i:03d}"
        room_dir.mkdir(exist_ok=True)
        save_json(layout_to_json(layout), room_dir / "layout.json")
        img = render_room_image(layout, grid)
        image_to_png(img, room_dir / "image.png")
        hd = raycast_depth(layout, grid.width)
        save_json(prediction_to_json(hd), room_dir / "depth.json")
        from .layout import rasterize_plane_mask
        mask_to_png(rasterize_plane_mask(layout, grid).mask, room_dir / "mask.png")
        paths.append(room_dir)
    return paths


def load_room(room_dir) -> Room:
    room_dir = Path(room_dir)
    for name in ("layout.json", "image.png", "mask.png"):
        if not (room_dir / name).exists():
            raise ValidationError(f"{room_dir} is missing {name}")
    layout = layout_from_json(load_json(room_dir / "layout.json"))
    image = png_to_image(room_dir / "image.png")
    H = image.shape[1]
    if image.shape[2] != 2 * H:
        raise ValidationError(f"{room_dir}: image is not 2:1")
    mask = png_to_mask(room_dir / "mask.png")
    if mask.shape != image.shape[1:]:
        raise ValidationError(f"{room_dir}: mask/image shape mismatch")
    depth = raycast_depth(layout, image.shape[2]).depth
    return Room(layout=layout, image=image, mask=mask, depth=depth)


def load_dataset(data_dir) -> list[Room]:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise ValidationError(f"{data_dir} is not a directory")
    room_dirs = sorted(p for p in data_dir.iterdir()
                       if p.is_dir() and (p / "layout.json").exists())
    if not room_dirs:
        raise ValidationError(f"{data_dir} holds no room directories")
    return [load_room(p) for p in room_dirs]


def cuboid_layout(width_m: float = 4.0, depth_m: float = 6.0,
                  height_m: float = 3.0,
                  camera_height_m: float = DEFAULT_CAMERA_HEIGHT) -> Layout:
    """Axis-aligned box centered on the camera; handy fixture everywhere."""
    a, b = width_m / 2.0, depth_m / 2.0
    poly = np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
    return Layout(floor_polygon=poly, room_height_m=height_m,
                  camera_height_m=camera_height_m)
