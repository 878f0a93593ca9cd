"""Synthetic room generator and dataset round trips."""

import numpy as np
import pytest

from panolayout.errors import ValidationError
from panolayout.layout import rasterize_plane_mask, raycast_depth
from panolayout.sphere import EquirectGrid
from panolayout.synth import (Room, SceneSpec, cuboid_layout,
                              generate_dataset, image_to_png, load_dataset,
                              load_room, png_to_image, render_room_image,
                              sample_layout)

GRID = EquirectGrid(64, 128)


def test_cuboid_helper(cuboid):
    assert cuboid.num_corners == 4
    assert cuboid.room_height_m == 3.0
    assert cuboid.camera_height_m == 1.6
    np.testing.assert_allclose(np.abs(cuboid.floor_polygon).max(axis=0),
                               [2.0, 3.0])


@pytest.mark.parametrize("corners", [4, 6, 8, 10, 12])
def test_sampled_rooms_have_requested_corners(corners):
    spec = SceneSpec(corners=corners)
    for seed in range(5):
        layout = sample_layout(np.random.default_rng(seed), spec)
        assert layout.num_corners == corners
        assert layout.camera_height_m == spec.camera_height_m


def test_scene_spec_rejects_unsupported_corner_counts():
    with pytest.raises(ValidationError):
        SceneSpec(corners=5)
    with pytest.raises(ValidationError):
        SceneSpec(corners=14)


def test_render_is_deterministic(cuboid):
    a = render_room_image(cuboid, GRID)
    b = render_room_image(cuboid, GRID)
    assert a.shape == (3, 64, 128)
    assert a.dtype == np.float64
    assert 0.0 <= a.min() and a.max() <= 1.0
    np.testing.assert_array_equal(a, b)


def test_png_roundtrip_quantizes_to_8bit(tmp_path, cuboid):
    img = render_room_image(cuboid, GRID)
    path = tmp_path / "img.png"
    image_to_png(img, path)
    back = png_to_image(path)
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-12


def test_generated_mask_matches_rasterizer(tmp_path):
    paths = generate_dataset(tmp_path / "d", 2, SceneSpec(corners=6), GRID,
                             seed=3)
    for p in paths:
        room = load_room(p)
        want = rasterize_plane_mask(room.layout, GRID).mask
        np.testing.assert_array_equal(room.mask, want)


def test_dataset_roundtrip(tmp_path):
    out = tmp_path / "rooms"
    paths = generate_dataset(out, 3, SceneSpec(corners=8), GRID, seed=11)
    assert len(paths) == 3
    rooms = load_dataset(out)
    assert len(rooms) == 3
    for room in rooms:
        assert isinstance(room, Room)
        assert room.image.shape == (3, GRID.height, GRID.width)
        assert room.layout.num_corners == 8
        # stored depth is the raycast of the stored layout
        np.testing.assert_allclose(
            room.depth, raycast_depth(room.layout, GRID.width).depth,
            rtol=1e-9)


def test_generated_rooms_differ_by_seed(tmp_path):
    a = generate_dataset(tmp_path / "a", 1, SceneSpec(), GRID, seed=0)
    b = generate_dataset(tmp_path / "b", 1, SceneSpec(), GRID, seed=1)
    la, lb = load_room(a[0]).layout, load_room(b[0]).layout
    assert la.floor_polygon.shape != lb.floor_polygon.shape or \
        not np.allclose(la.floor_polygon, lb.floor_polygon)


def test_load_dataset_rejects_empty(tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    with pytest.raises(ValidationError):
        load_dataset(empty)
    with pytest.raises(ValidationError):
        load_dataset(tmp_path / "missing")


def test_notched_rooms_are_star_shaped_from_origin():
    # raycast_depth requires every ray from the camera to exit through
    # exactly one wall; a successful full-width trace proves the sampled
    # room is star-shaped around the origin
    spec = SceneSpec(corners=12)
    for seed in range(8):
        layout = sample_layout(np.random.default_rng(seed), spec)
        hd = raycast_depth(layout, 256)
        assert np.all(hd.depth > 0)
