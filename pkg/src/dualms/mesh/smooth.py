from __future__ import annotations

import numpy as np
from scipy import sparse

from .types import TriangleMesh


def uniform_adjacency(mesh):
    e, _ = mesh.edges()
    n = mesh.n_vertices
    ones = np.ones(len(e))
    a = sparse.coo_matrix((ones, (e[:, 0], e[:, 1])), shape=(n, n))
    return (a + a.T).tocsr()


def laplacian_smooth(mesh, iterations=10, step=0.5):
    """Uniform-weight Laplacian smoothing; boundary vertices stay fixed.

    Each iteration moves every interior vertex by ``step`` towards the
    centroid of its one-ring neighbours (Jacobi update).
    """
    if not 0 < step <= 1:
        raise ValueError("step must be in (0, 1]")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if mesh.n_triangles == 0 or iterations == 0:
        return TriangleMesh(mesh.vertices.copy(), mesh.triangles.copy())
    adj = uniform_adjacency(mesh)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    movable = (~mesh.boundary_vertices()) & (deg > 0)
    v = mesh.vertices.copy()
    inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)[:, None]
    for _ in range(iterations):
        centroid = (adj @ v) * inv_deg
        v[movable] += step * (centroid[movable] - v[movable])
    return TriangleMesh(v, mesh.triangles.copy())
