"""Isosurface extraction, surface diagnostics, baselines, thickening and mesh IO."""
from .curvature import curvature_stats, mean_curvature, mixed_areas, vertex_normals
from .extract import marching_cubes, sample_grid, surface_area
from .implicit import (TPMS_KINDS, cylinder_sdf, equidistant_field, plane_field, sphere_sdf,
                       tpms_field)
from .io import export_mesh, load_grid, load_mesh, save_grid
from .smooth import laplacian_smooth
from .thicken import (ThickenResult, redistance, thicken, thickness_for_volume_fraction,
                      wall_volume_fraction)
from .types import ScalarGrid, TriangleMesh

__all__ = [
    "ScalarGrid", "TriangleMesh", "sample_grid", "marching_cubes", "surface_area",
    "mean_curvature", "mixed_areas", "vertex_normals", "curvature_stats", "tpms_field",
    "TPMS_KINDS", "equidistant_field", "sphere_sdf", "cylinder_sdf", "plane_field",
    "laplacian_smooth", "thicken", "ThickenResult", "redistance", "wall_volume_fraction",
    "thickness_for_volume_fraction", "export_mesh", "load_mesh", "save_grid", "load_grid",
]
