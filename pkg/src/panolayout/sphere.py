"""Equirectangular pixel grid and tangent-plane sampling geometry.

Two row conventions coexist and are kept explicit throughout the package:

  * pixel-center coordinates, used for sampling: pixel (r, c) has its center
    at latitude pi/2 - pi*(r+0.5)/H and longitude 2*pi*(c+0.5)/W - pi,
  * edge-based continuous rows, used for boundary curves: row(lat) =
    (pi/2 - lat) * H / pi, so the horizon sits at exactly H/2 and a pixel r
    spans [r, r+1).

Longitude wraps; latitude formulas extend analytically outside the image and
consumers clamp rows where appropriate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class EquirectGrid:
    """A 2:1 equirectangular pixel grid."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 2 or self.width != 2 * self.height:
            raise ValidationError(
                f"equirectangular grid must be 2:1 with height >= 2, got "
                f"{self.height}x{self.width}")

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.height, self.width))


def pixel_to_sphere(grid: EquirectGrid, row, col):
    """Pixel-center coordinates -> (latitude, longitude) in radians."""
    row = np.asarray(row, dtype=np.float64)
    col = np.asarray(col, dtype=np.float64)
    lat = np.pi / 2 - np.pi * (row + 0.5) / grid.height
    lon = 2 * np.pi * (col + 0.5) / grid.width - np.pi
    return lat, lon


def sphere_to_pixel(grid: EquirectGrid, lat, lon):
    """(latitude, longitude) -> fractional pixel-center (row, col)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    row = (np.pi / 2 - lat) * grid.height / np.pi - 0.5
    col = (lon + np.pi) * grid.width / (2 * np.pi) - 0.5
    return row, col


def lat_to_row_edge(grid: EquirectGrid, lat):
    """Latitude -> edge-based continuous row (horizon at exactly H/2)."""
    return (np.pi / 2 - np.asarray(lat, dtype=np.float64)) * grid.height / np.pi


def row_edge_to_lat(grid: EquirectGrid, row):
    return np.pi / 2 - np.pi * np.asarray(row, dtype=np.float64) / grid.height


def lon_to_col(grid: EquirectGrid, lon):
    """Longitude -> fractional column in pixel-center convention."""
    return (np.asarray(lon, dtype=np.float64) + np.pi) * grid.width / (2 * np.pi) - 0.5


def tangent_stencil(grid: EquirectGrid, angular_step: float | None = None) -> np.ndarray:
    """Per-row 3x3 tangent-plane sampling stencil, [H, 9, 2].

    Entry [r, k] holds (row, column-offset) in pixel-center coordinates for
    tap k of a pixel in image row r; the pixel's own column is added by the
    caller, which is exact because inverse-gnomonic longitude offsets depend
    only on the tangent latitude. Taps are ordered row-major over image
    (down, right) offsets, so k = 4 is the tangent point itself and is pinned
    to (r, 0) exactly.

    The grid spacing is tan(angular_step) on the tangent plane; the default
    step 2*pi/W is one equatorial pixel.
    """
    if angular_step is None:
        angular_step = 2 * np.pi / grid.width
    if not 0 < angular_step < np.pi / 3:
        raise ValidationError(f"angular_step out of range: {angular_step}")
    H, W = grid.height, grid.width

    t = np.tan(angular_step)
    rows = np.arange(H, dtype=np.float64)
    lat0 = np.pi / 2 - np.pi * (rows + 0.5) / H        # [H]

    di, dj = np.meshgrid([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], indexing="ij")
    u = (dj * t).reshape(-1)                            # [9] toward +lon
    v = (-di * t).reshape(-1)                           # [9] toward +lat

    # inverse gnomonic about (lat0, 0); the tan(c) terms cancel analytically
    denom = np.sqrt(1.0 + u**2 + v**2)                  # [9]
    s0, c0 = np.sin(lat0)[:, None], np.cos(lat0)[:, None]
    lat = np.arcsin(np.clip((s0 + v[None, :] * c0) / denom[None, :], -1.0, 1.0))
    lon = np.arctan2(u[None, :], c0 - v[None, :] * s0)  # [H, 9]

    stencil = np.empty((H, 9, 2), dtype=np.float64)
    stencil[:, :, 0] = (np.pi / 2 - lat) * H / np.pi - 0.5
    stencil[:, :, 1] = lon * W / (2 * np.pi)
    stencil[:, 4, 0] = rows                             # tangent point, exact
    stencil[:, 4, 1] = 0.0
    return stencil


def build_sampling_grid(grid: EquirectGrid, angular_step: float | None = None) -> np.ndarray:
    """Full per-pixel tap coordinates, [H, W, 9, 2] (row, col), center convention.

    Broadcasting the per-row stencil over columns keeps the grid bitwise
    column-homogeneous: coords[r, c, k] == coords[r, 0, k] + (0, c).
    """
    stencil = tangent_stencil(grid, angular_step)
    H, W = grid.height, grid.width
    out = np.empty((H, W, 9, 2), dtype=np.float64)
    out[:, :, :, 0] = stencil[:, None, :, 0]
    out[:, :, :, 1] = stencil[:, None, :, 1] + np.arange(W, dtype=np.float64)[None, :, None]
    return out


def rotate_panorama(x: np.ndarray, shift: int) -> np.ndarray:
    """Rotate a [..., W] panorama eastward by an integer number of columns."""
    if int(shift) != shift:
        raise ValidationError("rotate_panorama: shift must be an integer")
    return np.roll(x, int(shift), axis=-1)


def flip_panorama(x: np.ndarray) -> np.ndarray:
    """Mirror a [..., W] panorama in longitude."""
    return np.ascontiguousarray(x[..., ::-1])
