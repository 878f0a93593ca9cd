"""Room-layout representation and the geometry that moves between views.

A room is an extruded simple polygon: a floor plan in meters on the (x, z)
plane with the camera at the origin, a flat floor at y = -camera_height_m and
a flat ceiling at y = room_height_m - camera_height_m. x points toward
longitude +pi/2, z toward longitude 0, so a wall point at distance d along
longitude u sits at (x, z) = d * (sin u, cos u).

The horizon-depth view is the 1D sequence d(u_j) of distances from the camera
to the walls at the W column longitudes; together with the room height it is
exactly interchangeable with the polygon for star-shaped rooms (the synthetic
generator only produces those).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from shapely.geometry import Point, Polygon

from .errors import ValidationError
from .sphere import EquirectGrid, lat_to_row_edge, row_edge_to_lat, sphere_to_pixel

DEFAULT_CAMERA_HEIGHT = 1.6


@dataclass(frozen=True, eq=False)
class Layout:
    """Floor polygon (CCW, camera strictly inside) plus heights in meters."""

    floor_polygon: np.ndarray          # [K, 2] (x, z)
    room_height_m: float
    camera_height_m: float = DEFAULT_CAMERA_HEIGHT

    def __post_init__(self):
        poly = np.ascontiguousarray(self.floor_polygon, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
            raise ValidationError(f"floor_polygon must be [K>=3, 2], got {poly.shape}")
        if not np.all(np.isfinite(poly)):
            raise ValidationError("floor_polygon has non-finite vertices")
        object.__setattr__(self, "floor_polygon", poly)
        object.__setattr__(self, "room_height_m", float(self.room_height_m))
        object.__setattr__(self, "camera_height_m", float(self.camera_height_m))
        if not (0.0 < self.camera_height_m < self.room_height_m):
            raise ValidationError(
                f"need 0 < camera_height_m < room_height_m, got "
                f"{self.camera_height_m} / {self.room_height_m}")
        if not math.isfinite(self.room_height_m):
            raise ValidationError("room_height_m must be finite")
        shp = Polygon(poly)
        if not shp.is_simple or shp.area <= 0:
            raise ValidationError("floor_polygon must be a simple polygon")
        if _shoelace(poly) <= 0:
            raise ValidationError("floor_polygon must wind counter-clockwise")
        if not shp.contains(Point(0.0, 0.0)):
            raise ValidationError("camera (origin) must lie strictly inside the floor polygon")

    @property
    def num_corners(self) -> int:
        return int(self.floor_polygon.shape[0])

    def shapely(self) -> Polygon:
        return Polygon(self.floor_polygon)


@dataclass(frozen=True, eq=False)
class HorizonDepth:
    """Wall distance per column longitude, plus the room height."""

    depth: np.ndarray                  # [W], meters, > 0
    room_height_m: float

    def __post_init__(self):
        d = np.ascontiguousarray(self.depth, dtype=np.float64)
        if d.ndim != 1 or d.size < 4:
            raise ValidationError(f"depth must be a [W>=4] vector, got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValidationError("depth values must be finite and positive")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "room_height_m", float(self.room_height_m))
        if not (self.room_height_m > 0 and math.isfinite(self.room_height_m)):
            raise ValidationError("room_height_m must be finite and positive")

    @property
    def width(self) -> int:
        return int(self.depth.size)


@dataclass(frozen=True, eq=False)
class BoundaryPair:
    """Ceiling and floor boundary curves in edge-based continuous rows."""

    ceiling_rows: np.ndarray           # [W]
    floor_rows: np.ndarray             # [W]

    def __post_init__(self):
        c = np.ascontiguousarray(self.ceiling_rows, dtype=np.float64)
        f = np.ascontiguousarray(self.floor_rows, dtype=np.float64)
        if c.shape != f.shape or c.ndim != 1:
            raise ValidationError("boundary curves must be 1D and equal length")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(f))):
            raise ValidationError("boundary rows must be finite")
        if not np.all(c < f):
            raise ValidationError("ceiling boundary must stay above the floor boundary")
        object.__setattr__(self, "ceiling_rows", c)
        object.__setattr__(self, "floor_rows", f)


@dataclass(frozen=True, eq=False)
class PlaneMask:
    """1.0 on horizontal-plane pixels (ceiling or floor), 0.0 on walls."""

    mask: np.ndarray                   # [H, W] float64 in {0, 1}

    def __post_init__(self):
        m = np.ascontiguousarray(self.mask, dtype=np.float64)
        if m.ndim != 2:
            raise ValidationError(f"mask must be [H, W], got {m.shape}")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValidationError("mask entries must be 0 or 1")
        object.__setattr__(self, "mask", m)


def _shoelace(poly: np.ndarray) -> float:
    x, z = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def column_longitudes(width: int) -> np.ndarray:
    """Longitude of each pixel-center column, [W], in (-pi, pi)."""
    if width < 4:
        raise ValidationError("need at least 4 columns")
    return 2 * np.pi * (np.arange(width) + 0.5) / width - np.pi


def raycast_at_angles(layout: Layout, angles: np.ndarray) -> np.ndarray:
    """Distance from the origin to the polygon boundary along each longitude.

    angles are longitudes (x = sin u, z = cos u). The camera sits strictly
    inside, so every ray hits exactly one boundary point; the closest valid
    edge intersection is returned.
    """
    angles = np.asarray(angles, dtype=np.float64)
    p = layout.floor_polygon
    q = np.roll(p, -1, axis=0)
    e = q - p                                            # [K, 2]
    d = np.stack([np.sin(angles), np.cos(angles)], axis=-1)  # [N, 2]

    # solve t*d = p + s*e per (ray, edge); 2D cross a_x*b_z - a_z*b_x
    dxe = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    pxe = p[:, 0] * e[:, 1] - p[:, 1] * e[:, 0]          # [K]
    pxd = p[None, :, 0] * d[:, None, 1] - p[None, :, 1] * d[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = pxe[None, :] / dxe
        s = pxd / dxe
    ok = (np.abs(dxe) > 1e-300) & (s >= -1e-12) & (s <= 1 + 1e-12) & (t > 1e-9)
    t = np.where(ok, t, np.inf)
    best = t.min(axis=1)
    if not np.all(np.isfinite(best)):
        raise ValidationError("raycast: some rays never hit the polygon boundary")
    return best


def raycast_depth(layout: Layout, width: int) -> HorizonDepth:
    """Horizon-depth sequence at the W pixel-center longitudes."""
    u = column_longitudes(width)
    return HorizonDepth(depth=raycast_at_angles(layout, u),
                        room_height_m=layout.room_height_m)


def depth_to_boundaries(hd: HorizonDepth, grid: EquirectGrid,
                        camera_height_m: float = DEFAULT_CAMERA_HEIGHT) -> BoundaryPair:
    """Project per-column depths to ceiling/floor boundary rows (edge coords).

    Floor latitude is -atan(camera/d), ceiling latitude
    +atan((height-camera)/d); as d grows both rows approach the horizon H/2.
    """
    if hd.width != grid.width:
        raise ValidationError(f"depth width {hd.width} != grid width {grid.width}")
    if not (0.0 < camera_height_m < hd.room_height_m):
        raise ValidationError("camera height must lie inside the room height")
    d = hd.depth
    lat_floor = -np.arctan2(camera_height_m, d)
    lat_ceil = np.arctan2(hd.room_height_m - camera_height_m, d)
    return BoundaryPair(ceiling_rows=lat_to_row_edge(grid, lat_ceil),
                        floor_rows=lat_to_row_edge(grid, lat_floor))


def boundaries_to_depth(bp: BoundaryPair, grid: EquirectGrid,
                        camera_height_m: float = DEFAULT_CAMERA_HEIGHT) -> HorizonDepth:
    """Invert depth_to_boundaries; room height is recovered per column and averaged."""
    if bp.floor_rows.size != grid.width:
        raise ValidationError("boundary width mismatch with grid")
    lat_floor = row_edge_to_lat(grid, bp.floor_rows)
    lat_ceil = row_edge_to_lat(grid, bp.ceiling_rows)
    if not (np.all(lat_floor < 0) and np.all(lat_ceil > 0)):
        raise ValidationError("boundaries must straddle the horizon")
    depth = camera_height_m / np.tan(-lat_floor)
    heights = camera_height_m + depth * np.tan(lat_ceil)
    return HorizonDepth(depth=depth, room_height_m=float(heights.mean()))


def rasterize_labels(layout: Layout, grid: EquirectGrid) -> np.ndarray:
    """Per-pixel 3-way region labels: 0 ceiling, 1 wall, 2 floor, [H, W] uint8.

    Each pixel is classified by its center (row r + 0.5 in edge coordinates)
    against the boundary curves of its column.
    """
    hd = raycast_depth(layout, grid.width)
    bp = depth_to_boundaries(hd, grid, layout.camera_height_m)
    centers = np.arange(grid.height, dtype=np.float64)[:, None] + 0.5
    labels = np.ones((grid.height, grid.width), dtype=np.uint8)
    labels[centers < bp.ceiling_rows[None, :]] = 0
    labels[centers > bp.floor_rows[None, :]] = 2
    return labels


def rasterize_plane_mask(layout: Layout, grid: EquirectGrid) -> PlaneMask:
    """Binary horizontal-plane mask: 1 on ceiling/floor pixels, 0 on walls."""
    labels = rasterize_labels(layout, grid)
    return PlaneMask(mask=(labels != 1).astype(np.float64))


# ---------------------------------------------------------------------------
# normals and gradients of the depth sequence


def normals_vjp(depth: np.ndarray):
    """Wall-normal angle per column from the traced floor plan, with vjp.

    Column j at longitude u_j maps to p_j = d_j (sin u_j, cos u_j); the trace
    runs clockwise in (x, z), so the inward normal of edge e = p_{j+1} - p_j
    is (e_z, -e_x). Returns the normal angles atan2(n_x, n_z) in (-pi, pi].
    """
    d = np.asarray(depth, dtype=np.float64)
    W = d.size
    u = column_longitudes(W)
    sx, cz = np.sin(u), np.cos(u)
    px, pz = d * sx, d * cz
    ex = np.roll(px, -1) - px
    ez = np.roll(pz, -1) - pz
    nx, nz = ez, -ex
    sq = nx * nx + nz * nz
    if np.any(sq == 0):
        raise ValidationError("degenerate zero-length wall edge")
    angles = np.arctan2(nx, nz)

    def vjp(g: np.ndarray):
        # atan2(nx, nz): d/dnx = nz/sq, d/dnz = -nx/sq
        dnx = g * nz / sq
        dnz = -g * nx / sq
        dex = -dnz
        dez = dnx
        dpx = np.roll(dex, 1) - dex
        dpz = np.roll(dez, 1) - dez
        return (dpx * sx + dpz * cz,)

    return angles, vjp


def gradients_vjp(depth: np.ndarray):
    """Circular central difference of the depth sequence, with vjp."""
    d = np.asarray(depth, dtype=np.float64)
    out = 0.5 * (np.roll(d, -1) - np.roll(d, 1))

    def vjp(g: np.ndarray):
        return (0.5 * (np.roll(g, 1) - np.roll(g, -1)),)

    return out, vjp


def depth_normals_gradients(hd: HorizonDepth) -> tuple[np.ndarray, np.ndarray]:
    """Normal angles and circular depth gradients of a horizon-depth view."""
    return normals_vjp(hd.depth)[0], gradients_vjp(hd.depth)[0]


# ---------------------------------------------------------------------------
# polygon <-> prediction round trip


def layout_from_prediction(hd: HorizonDepth,
                           camera_height_m: float = DEFAULT_CAMERA_HEIGHT) -> Layout:
    """Realize the polygon traced by a horizon-depth prediction.

    The W-gon is taken as-is (no corner snapping); the polar trace runs
    clockwise so vertices are reversed to satisfy the CCW layout convention.
    The camera height is clamped below tiny predicted room heights to keep
    the layout invariant 0 < camera < height for arbitrary network outputs.
    """
    u = column_longitudes(hd.width)
    pts = np.stack([hd.depth * np.sin(u), hd.depth * np.cos(u)], axis=-1)
    cam = min(camera_height_m, 0.5 * hd.room_height_m)
    return Layout(floor_polygon=pts[::-1], room_height_m=hd.room_height_m,
                  camera_height_m=cam)


def extract_wall_corners(polygon: np.ndarray, angle_tol: float = 1e-6) -> np.ndarray:
    """Recover wall corners from a dense polygon trace, [K, 2].

    Consecutive edges are grouped into maximal same-direction runs; a run of
    a single edge is the diagonal a ray trace takes across a corner and is
    dropped; the corners are the intersections of consecutive run support
    lines. Exact for polygons whose traced vertices all lie on the true wall
    lines and whose walls subtend at least two trace edges. Polygons that are
    already sparse (every edge its own wall) are returned unchanged.
    """
    pts = np.asarray(polygon, dtype=np.float64)
    n = pts.shape[0]
    e = np.roll(pts, -1, axis=0) - pts
    norm = np.hypot(e[:, 0], e[:, 1])
    if np.any(norm == 0):
        raise ValidationError("degenerate polygon edge")
    dirs = e / norm[:, None]
    # same-direction test between edge i and i+1 via the sine of the turn
    turn = dirs[:, 0] * np.roll(dirs[:, 1], -1) - dirs[:, 1] * np.roll(dirs[:, 0], -1)
    straight = np.abs(turn) < angle_tol            # edge i -> i+1 keeps direction

    if np.all(~straight):
        return pts.copy()
    if np.all(straight):
        raise ValidationError("polygon has no corners")

    # split the circular edge list into runs at every direction change
    breaks = np.flatnonzero(~straight)             # run ends at edge b
    runs = []
    prev = breaks[-1]
    for b in breaks:
        first = (prev + 1) % n
        count = (b - first) % n + 1
        runs.append((first, count))
        prev = b
    lines = []
    for first, count in runs:
        if count < 2:
            continue                               # corner-crossing diagonal
        a = pts[first]
        b = pts[(first + count - 1) % n]           # start of the run's last edge
        b = b + e[(first + count - 1) % n]         # its far endpoint
        lines.append((a, b - a))
    if len(lines) < 3:
        raise ValidationError("too few wall runs to recover corners")

    corners = []
    for i in range(len(lines)):
        (a1, d1), (a2, d2) = lines[i], lines[(i + 1) % len(lines)]
        den = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(den) < 1e-12:
            raise ValidationError("consecutive wall runs are parallel")
        t = ((a2[0] - a1[0]) * d2[1] - (a2[1] - a1[1]) * d2[0]) / den
        corners.append(a1 + t * d1)
    return np.asarray(corners)


def project_corner_pixels(layout: Layout, grid: EquirectGrid) -> np.ndarray:
    """Ceiling + floor pixel positions of the polygon's vertices, [2K, 2].

    Rows 0..K-1 are the ceiling projections, K..2K-1 the floor projections,
    each an fractional (row, col) in pixel-center coordinates.
    """
    poly = layout.floor_polygon
    r = np.hypot(poly[:, 0], poly[:, 1])
    if np.any(r <= 0):
        raise ValidationError("corner coincides with the camera")
    lon = np.arctan2(poly[:, 0], poly[:, 1])
    lat_floor = -np.arctan2(layout.camera_height_m, r)
    lat_ceil = np.arctan2(layout.room_height_m - layout.camera_height_m, r)
    rows_c, cols = sphere_to_pixel(grid, lat_ceil, lon)
    rows_f, _ = sphere_to_pixel(grid, lat_floor, lon)
    return np.concatenate([np.stack([rows_c, cols], axis=-1),
                           np.stack([rows_f, cols], axis=-1)])


def pano_stretch(layout: Layout, kx: float, kz: float) -> Layout:
    """Scale the floor plan axes by (kx, kz); heights are unchanged."""
    if not (kx > 0 and kz > 0):
        raise ValidationError("stretch factors must be positive")
    poly = layout.floor_polygon * np.array([kx, kz])
    return Layout(floor_polygon=poly, room_height_m=layout.room_height_m,
                  camera_height_m=layout.camera_height_m)


# ---------------------------------------------------------------------------
# JSON io (strict schemas; unknown fields rejected)

_LAYOUT_KEYS = {"floor_polygon", "room_height_m", "camera_height_m"}
_PREDICTION_KEYS = {"horizon_depth", "room_height_m"}


def layout_to_json(layout: Layout) -> dict:
    return {"floor_polygon": [[float(x), float(z)] for x, z in layout.floor_polygon],
            "room_height_m": layout.room_height_m,
            "camera_height_m": layout.camera_height_m}


def layout_from_json(obj: dict) -> Layout:
    if not isinstance(obj, dict):
        raise ValidationError("layout JSON must be an object")
    unknown = set(obj) - _LAYOUT_KEYS
    if unknown:
        raise ValidationError(f"layout JSON has unknown fields: {sorted(unknown)}")
    missing = _LAYOUT_KEYS - set(obj)
    if missing:
        raise ValidationError(f"layout JSON missing fields: {sorted(missing)}")
    return Layout(floor_polygon=np.asarray(obj["floor_polygon"], dtype=np.float64),
                  room_height_m=obj["room_height_m"],
                  camera_height_m=obj["camera_height_m"])


def prediction_to_json(hd: HorizonDepth) -> dict:
    return {"horizon_depth": [float(v) for v in hd.depth],
            "room_height_m": hd.room_height_m}


def prediction_from_json(obj: dict) -> HorizonDepth:
    if not isinstance(obj, dict):
        raise ValidationError("prediction JSON must be an object")
    unknown = set(obj) - _PREDICTION_KEYS
    if unknown:
        raise ValidationError(f"prediction JSON has unknown fields: {sorted(unknown)}")
    missing = _PREDICTION_KEYS - set(obj)
    if missing:
        raise ValidationError(f"prediction JSON missing fields: {sorted(missing)}")
    return HorizonDepth(depth=np.asarray(obj["horizon_depth"], dtype=np.float64),
                        room_height_m=obj["room_height_m"])


def save_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})") from None
