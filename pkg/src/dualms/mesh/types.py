from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    """Node-centred samples ``values[i, j, k]`` at ``origin + (i, j, k) * spacing``.

    ``mask`` is True at active nodes (inside the domain); None means all active.
    """

    values: np.ndarray
    origin: tuple
    spacing: tuple
    mask: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.values.shape:
                raise ValueError("mask shape does not match values")
            object.__setattr__(self, "mask", mask)

    @property
    def resolution(self):
        return self.values.shape

    @property
    def active(self):
        return np.ones(self.values.shape, dtype=bool) if self.mask is None else self.mask

    @property
    def bbox(self):
        lo = np.asarray(self.origin)
        return lo, lo + (np.asarray(self.resolution) - 1) * np.asarray(self.spacing)

    def nodes(self):
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.resolution)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_values(self, values):
        return ScalarGrid(values, self.origin, self.spacing, self.mask)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices",
                           np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "triangles",
                           np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def corners(self):
        return self.vertices[self.triangles]

    def triangle_normals(self):
        """Unnormalised (twice-area) normals by right-hand winding."""
        c = self.corners()
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    def triangle_areas(self):
        return 0.5 * np.linalg.norm(self.triangle_normals(), axis=1)

    def bbox_diagonal(self):
        if self.n_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    def edges(self):
        """Unique undirected edges and, per edge, the number of incident triangles."""
        t = self.triangles
        all_edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return np.unique(all_edges, axis=0, return_counts=True)

    def boundary_vertices(self):
        """Vertices on an edge that is not shared by exactly two triangles."""
        e, counts = self.edges()
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[e[counts != 2].ravel()] = True
        return flag

    def euler_characteristic(self):
        used = np.unique(self.triangles)
        return len(used) - len(self.edges()[0]) + self.n_triangles

    def compact(self):
        """Drop unreferenced vertices, keeping order of first use stable by index."""
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        remap = np.cumsum(used) - 1
        channels = {k: np.asarray(v)[used] for k, v in self.channels.items()}
        return TriangleMesh(self.vertices[used], remap[self.triangles], channels)

    def with_channel(self, name, values):
        return TriangleMesh(self.vertices, self.triangles, {**self.channels, name: values})
