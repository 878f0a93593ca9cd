"""Spherical coordinate conventions and the tangent-plane stencil."""

import numpy as np
import pytest

from panolayout.errors import ValidationError
from panolayout.sphere import (EquirectGrid, build_sampling_grid,
                               flip_panorama, lat_to_row_edge, lon_to_col,
                               pixel_to_sphere, row_edge_to_lat,
                               rotate_panorama, sphere_to_pixel,
                               tangent_stencil)


def test_grid_must_be_two_to_one():
    EquirectGrid(256, 512)
    with pytest.raises(ValidationError):
        EquirectGrid(256, 500)
    with pytest.raises(ValidationError):
        EquirectGrid(1, 2)


def test_pixel_center_convention():
    grid = EquirectGrid(256, 512)
    lat, lon = pixel_to_sphere(grid, 0.0, 0.0)
    assert lat == pytest.approx(np.pi / 2 - np.pi * 0.5 / 256, abs=1e-15)
    assert lon == pytest.approx(-np.pi + 2 * np.pi * 0.5 / 512, abs=1e-15)
    # roundtrip through the inverse map
    r, c = sphere_to_pixel(grid, lat, lon)
    assert (r, c) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_horizon_is_exactly_half_height():
    grid = EquirectGrid(512, 1024)
    assert lat_to_row_edge(grid, 0.0) == 256.0
    assert row_edge_to_lat(grid, 256.0) == 0.0


def test_edge_rows_are_linear_in_latitude():
    grid = EquirectGrid(512, 1024)
    lats = np.linspace(-np.pi / 2, np.pi / 2, 33)
    rows = lat_to_row_edge(grid, lats)
    np.testing.assert_allclose(np.diff(rows), np.diff(rows)[0], atol=1e-9)
    np.testing.assert_allclose(row_edge_to_lat(grid, rows), lats, atol=1e-12)


def test_longitude_to_column_wraps_linearly():
    # pixel-center convention: the seam longitude -pi lands half a pixel
    # before column 0, and +pi half a pixel past the last column
    grid = EquirectGrid(256, 512)
    cols = lon_to_col(grid, np.array([-np.pi, 0.0, np.pi]))
    np.testing.assert_allclose(cols, [-0.5, 255.5, 511.5], atol=1e-9)


def test_stencil_center_tap_pinned():
    grid = EquirectGrid(128, 256)
    st = tangent_stencil(grid)
    assert st.shape == (128, 9, 2)
    np.testing.assert_array_equal(st[:, 4, 0], np.arange(128, dtype=np.float64))
    np.testing.assert_array_equal(st[:, 4, 1], 0.0)


def test_stencil_spread_tracks_secant_of_latitude():
    grid = EquirectGrid(512, 1024)
    st = tangent_stencil(grid)
    rows = np.arange(grid.height)
    lat, _ = pixel_to_sphere(grid, rows, np.zeros_like(rows))
    # east/west taps sit one angular step out; a distortion-unaware stencil
    # would keep the 2 px spread of the plain 3x3 neighborhood
    spread = st[:, 5, 1] - st[:, 3, 1]
    band = np.abs(lat) <= np.deg2rad(75.0)
    ratio = spread[band] / 2.0
    np.testing.assert_allclose(ratio, 1.0 / np.cos(lat[band]), rtol=0.02)


def test_stencil_reduces_to_plain_3x3_at_equator():
    grid = EquirectGrid(512, 1024)
    st = tangent_stencil(grid)
    rows = np.arange(grid.height)
    lat, _ = pixel_to_sphere(grid, rows, np.zeros_like(rows))
    r = int(np.argmin(np.abs(lat)))
    lattice = np.array([(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)],
                       dtype=np.float64)
    err = np.hypot(st[r, :, 0] - (r + lattice[:, 0]), st[r, :, 1] - lattice[:, 1])
    assert err.max() < 1e-3


def test_stencil_angular_step_bounds():
    grid = EquirectGrid(64, 128)
    tangent_stencil(grid, angular_step=np.pi / 3 - 1e-9)
    for bad in (0.0, -0.1, np.pi / 3, 2.0):
        with pytest.raises(ValidationError):
            tangent_stencil(grid, angular_step=bad)


def test_sampling_grid_is_column_homogeneous():
    grid = EquirectGrid(32, 64)
    coords = build_sampling_grid(grid)
    assert coords.shape == (32, 64, 9, 2)
    shifted = coords[:, 0:1, :, :].copy()
    shifted = np.broadcast_to(shifted, coords.shape).copy()
    shifted[:, :, :, 1] += np.arange(64, dtype=np.float64)[None, :, None]
    np.testing.assert_array_equal(coords, shifted)


def test_rotate_panorama_rolls_columns(rng):
    x = rng.normal(size=(3, 8, 16))
    np.testing.assert_array_equal(rotate_panorama(x, 5), np.roll(x, 5, axis=-1))
    np.testing.assert_array_equal(rotate_panorama(rotate_panorama(x, 7), -7), x)
    with pytest.raises(ValidationError):
        rotate_panorama(x, 2.5)


def test_flip_panorama_mirrors_longitude(rng):
    x = rng.normal(size=(2, 6, 12))
    flipped = flip_panorama(x)
    np.testing.assert_array_equal(flipped, x[:, :, ::-1])
    np.testing.assert_array_equal(flip_panorama(flipped), x)
