"""Panoramic room-layout estimation with hand-verified gradients.

The package implements the full desk-scale pipeline: distortion-aware
tangent-plane sampling on the equirectangular sphere, cross-scale feature
assembling, orthogonal-plane disentangling, 1D sequence reconstruction with
graph/self/cross attention, horizon-depth and room-height heads, the training
losses and layout metrics, and a synthetic-room data harness with a CLI.
"""

from .errors import NumericalError, ValidationError
from .gradcheck import GradCheckReport, grad_check
from .layout import (BoundaryPair, HorizonDepth, Layout, PlaneMask,
                     boundaries_to_depth, depth_normals_gradients,
                     depth_to_boundaries, extract_wall_corners,
                     layout_from_prediction, pano_stretch, raycast_depth,
                     rasterize_plane_mask)
from .params import ParamStore, load_dopw, save_dopw
from .sphere import (EquirectGrid, build_sampling_grid, flip_panorama,
                     pixel_to_sphere, rotate_panorama, sphere_to_pixel,
                     tangent_stencil)

__version__ = "0.1.0"

__all__ = [
    "BoundaryPair", "EquirectGrid", "GradCheckReport", "HorizonDepth",
    "Layout", "NumericalError", "ParamStore", "PlaneMask", "ValidationError",
    "boundaries_to_depth", "build_sampling_grid", "depth_normals_gradients",
    "depth_to_boundaries", "extract_wall_corners", "flip_panorama",
    "grad_check", "layout_from_prediction", "load_dopw", "pano_stretch",
    "pixel_to_sphere", "raycast_depth", "rasterize_plane_mask",
    "rotate_panorama", "save_dopw", "sphere_to_pixel", "tangent_stencil",
    "__version__",
]
