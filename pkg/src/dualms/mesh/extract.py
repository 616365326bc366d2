"""Grid sampling, Marching Cubes extraction, area."""
from __future__ import annotations

import numpy as np
from skimage import measure

from ..exceptions import EmptySurface
from .types import ScalarGrid, TriangleMesh

_SAMPLE_CHUNK = 1 << 18
DEGENERATE_REL_AREA = 1e-12


def sample_grid(f, bbox, resolution, mask=None):
    """Evaluate ``f`` on ``(n, 3)`` node arrays of a ``resolution`` lattice spanning ``bbox``.

    ``mask`` is a domain (anything with ``contains``); nodes outside it are
    recorded as inactive but still evaluated.
    """
    res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), (3,))
    if np.any(res < 2):
        raise ValueError("resolution must be >= 2 per axis")
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bbox)
    spacing = (hi - lo) / (res - 1)
    grid = ScalarGrid(np.zeros(tuple(res)), lo, spacing)
    nodes = grid.nodes().reshape(-1, 3)
    values = np.empty(len(nodes))
    for start in range(0, len(nodes), _SAMPLE_CHUNK):
        values[start:start + _SAMPLE_CHUNK] = np.asarray(f(nodes[start:start + _SAMPLE_CHUNK]),
                                                         dtype=np.float64).reshape(-1)
    active = None if mask is None else mask.contains(nodes).reshape(tuple(res))
    return ScalarGrid(values.reshape(tuple(res)), lo, spacing, active)


def _cell_ok(grid):
    """Cells whose eight corners are all active."""
    a = grid.active
    return (a[:-1, :-1, :-1] & a[1:, :-1, :-1] & a[:-1, 1:, :-1] & a[:-1, :-1, 1:]
            & a[1:, 1:, :-1] & a[1:, :-1, 1:] & a[:-1, 1:, 1:] & a[1:, 1:, 1:])


def marching_cubes(grid, iso=0.0, allow_empty=False):
    """Zero-set triangulation with normals (by winding) towards increasing values.

    Triangles generated in cells with any inactive corner are discarded, as
    are degenerate triangles (area below 1e-12 of the squared bbox diagonal).
    """
    vals = grid.values
    active = grid.active
    if not np.all(np.isfinite(vals[active])):
        raise ValueError("grid has non-finite values at active nodes")
    lo_v, hi_v = vals[active].min(initial=np.inf), vals[active].max(initial=-np.inf)
    if not (lo_v < iso < hi_v or (lo_v <= iso <= hi_v and lo_v < hi_v)):
        if allow_empty:
            return TriangleMesh.empty()
        raise EmptySurface(f"no crossing of level {iso}")
    # inactive nodes may hold anything; in-range finite values keep skimage happy
    safe = np.where(np.isfinite(vals), vals, iso)
    try:
        verts, faces, _, _ = measure.marching_cubes(safe, level=iso, spacing=grid.spacing,
                                                    allow_degenerate=True, method="lewiner")
    except RuntimeError:
        # the level is only touched at nodes, never crossed inside a cell
        verts, faces = np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    verts = verts + np.asarray(grid.origin)
    mesh = TriangleMesh(verts, faces)
    if mesh.n_triangles:
        ok = _cell_ok(grid)
        centroid = (mesh.corners().mean(axis=1) - np.asarray(grid.origin)) / np.asarray(grid.spacing)
        cell = np.clip(np.floor(centroid).astype(np.int64), 0, np.asarray(ok.shape) - 1)
        keep = ok[cell[:, 0], cell[:, 1], cell[:, 2]]
        diag = float(np.linalg.norm(np.subtract(*grid.bbox[::-1])))
        keep &= mesh.triangle_areas() > DEGENERATE_REL_AREA * diag ** 2
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[keep]).compact()
    if mesh.n_triangles == 0 and not allow_empty:
        raise EmptySurface(f"no crossing of level {iso} in active cells")
    return mesh


def surface_area(mesh):
    if mesh.n_triangles == 0:
        return 0.0
    return float(mesh.triangle_areas().sum())
