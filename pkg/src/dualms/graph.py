"""Flow-weighted spatial graph: CVT sites, Delaunay edges, two-level weights."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError, cKDTree

from ._random import make_rng
from .domain import sample_interior
from .exceptions import DegenerateInput, GraphDisconnected, InvalidDomain, PortConflict, ZeroFlow

DEFAULT_PENALTY = 5.0
# |cos theta| within _BOUNDARY_TOL of cos(pi/4) is treated as the closed boundary
_COS_QUARTER = np.sqrt(0.5)
_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpatialGraph:
    """Undirected weighted graph with vertices embedded in the domain.

    ``edges`` holds canonical ``u < v`` pairs sorted lexicographically;
    ``pinned`` maps vertex index to the fluid label it is bound to.
    """

    vertices: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    pinned: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and np.any(e[:, 0] >= e[:, 1]):
            raise ValueError("edges must satisfy u < v")
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def total_weight(self):
        return float(self.weights.sum())

    @cached_property
    def weight_matrix(self):
        n = self.n_vertices
        u, v = self.edges.T
        w = sparse.coo_matrix((self.weights, (u, v)), shape=(n, n))
        return (w + w.T).tocsr()

    @cached_property
    def binary_adjacency(self):
        m = self.weight_matrix.copy()
        m.data[:] = 1.0
        return m

    @cached_property
    def adjacency(self):
        m = self.weight_matrix
        return [m.indices[m.indptr[i]:m.indptr[i + 1]] for i in range(self.n_vertices)]

    @cached_property
    def degree(self):
        return np.diff(self.weight_matrix.indptr)

    def is_connected(self):
        if self.n_vertices == 0:
            return False
        n_comp, _ = connected_components(self.weight_matrix, directed=False)
        return n_comp == 1

    def with_pins(self, pinned):
        return replace(self, pinned=dict(pinned))


def graph_from_edges(n_vertices, edges, weights=None, vertices=None, pinned=None):
    """Build a graph from arbitrary (possibly unordered, duplicated) pairs."""
    e = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
    w = np.ones(len(e)) if weights is None else np.asarray(weights, float)
    keep = e[:, 0] != e[:, 1]
    e, w = e[keep], w[keep]
    e, first = np.unique(e, axis=0, return_index=True)
    if vertices is None:
        vertices = np.zeros((n_vertices, 3))
    return SpatialGraph(vertices, e, w[first], dict(pinned or {}))


# ---------------------------------------------------------------- construction


def cvt_relax(points, domain, iterations=20, density_samples=50_000, seed=0):
    """Monte-Carlo Lloyd relaxation of ``points`` inside ``domain``."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    sites = np.array(points, dtype=np.float64)
    if len(sites) == 0:
        raise ValueError("points must be nonempty")
    for it in range(iterations):
        samples = sample_interior(domain, density_samples, seed=make_rng(seed, "cvt", it))
        _, owner = cKDTree(sites).query(samples)
        counts = np.bincount(owner, minlength=len(sites))
        sums = np.zeros_like(sites)
        np.add.at(sums, owner, samples)
        filled = counts > 0
        centroids = sites.copy()
        centroids[filled] = sums[filled] / counts[filled, None]
        outside = filled & ~domain.contains(centroids)
        for i in np.flatnonzero(outside):
            own = samples[owner == i]
            centroids[i] = own[np.argmin(np.sum((own - centroids[i]) ** 2, axis=1))]
        sites = centroids
    return sites


def _rank_deficient(points):
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] == 0 or s[-1] <= 1e-12 * s[0]


def _delaunay_pairs(points):
    tri = Delaunay(points)
    simplices = tri.simplices
    pairs = np.concatenate([simplices[:, [i, j]] for i in range(4) for j in range(i + 1, 4)])
    return np.unique(np.sort(pairs, axis=1), axis=0)


def delaunay_edges(points):
    """Edge set of the 3D Delaunay tetrahedralisation as sorted ``u < v`` pairs."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateInput("need at least 4 points in 3D")
    if _rank_deficient(pts):
        raise DegenerateInput("points are coplanar or collinear")
    try:
        return _delaunay_pairs(pts)
    except QhullError:
        pass
    # one deterministic jitter retry, then a hard error
    diag = float(np.linalg.norm(pts.max(0) - pts.min(0)))
    jittered = pts + 1e-9 * diag * make_rng(0, "delaunay_jitter").standard_normal(pts.shape)
    try:
        return _delaunay_pairs(jittered)
    except QhullError as exc:
        raise DegenerateInput(f"Delaunay failed after jitter retry: {exc}") from exc


def edge_inside_mask(points, edges, domain, samples=1):
    """Keep edges whose interior sample points (1 or 3) lie in the domain."""
    fractions = [0.5] if samples == 1 else [0.25, 0.5, 0.75]
    a, b = points[edges[:, 0]], points[edges[:, 1]]
    keep = np.ones(len(edges), dtype=bool)
    for t in fractions:
        keep &= domain.contains((1 - t) * a + t * b)
    return keep


def assign_weights(points, edges, flow, a=DEFAULT_PENALTY, domain=None, edge_samples=1):
    """Weight ``a`` for edges roughly perpendicular to the mean flow, else 1.

    ``flow`` is any callable mapping ``(n, 3)`` points to vectors.  When
    ``domain`` is given, edges leaving it (midpoint test, or three samples
    with ``edge_samples=3``) are dropped.
    """
    if not a > 1:
        raise ValueError("penalty factor a must be > 1")
    pts = np.asarray(points, dtype=np.float64)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if domain is not None and len(e):
        e = e[edge_inside_mask(pts, e, domain, edge_samples)]
    vflow = flow(pts)
    f = vflow[e[:, 0]] + vflow[e[:, 1]]
    fn = np.linalg.norm(f, axis=1)
    if np.any(fn == 0):
        bad = e[np.argmax(fn == 0)]
        raise ZeroFlow(f"mean flow vanishes on edge {tuple(bad)}")
    d = pts[e[:, 1]] - pts[e[:, 0]]
    cos = np.abs(np.sum(d * f, axis=1)) / (np.linalg.norm(d, axis=1) * fn)
    # theta in (pi/4, 3pi/4)  <=>  |cos theta| < cos(pi/4); open interval
    perpendicular = cos < _COS_QUARTER - _BOUNDARY_TOL
    w = np.where(perpendicular, float(a), 1.0)
    order = np.lexsort((e[:, 1], e[:, 0]))
    return SpatialGraph(pts, e[order], w[order])


def pin_ports(graph, domain):
    """Bind each port of ``domain`` to its nearest graph vertex."""
    if not domain.ports:
        return graph.with_pins({})
    tree = cKDTree(graph.vertices)
    pinned = {}
    for port in domain.ports:
        _, idx = tree.query(np.asarray(port.position, float))
        idx = int(idx)
        if pinned.get(idx, port.fluid) != port.fluid:
            raise PortConflict(f"vertex {idx} is nearest to ports of both fluids")
        pinned[idx] = port.fluid
    return graph.with_pins(pinned)


def build_graph(domain, n_vertices=500, cvt_iterations=20, density_samples=50_000,
                a=DEFAULT_PENALTY, edge_samples=1, seed=0):
    """Sample, relax, triangulate, weight and pin; asserts connectivity."""
    if domain.flow is None:
        raise InvalidDomain(f"{domain.name}: a flow field is required to weight edges")
    pts = sample_interior(domain, n_vertices, seed=make_rng(seed, "graph_sites"))
    pts = cvt_relax(pts, domain, cvt_iterations, density_samples, seed=seed)
    edges = delaunay_edges(pts)
    graph = assign_weights(pts, edges, domain.flow, a=a, domain=domain, edge_samples=edge_samples)
    if not graph.is_connected():
        raise GraphDisconnected(f"graph on {n_vertices} vertices is disconnected after edge filtering")
    return pin_ports(graph, domain)


# ---------------------------------------------------------------- file format


def graph_to_dict(graph, meta=None):
    return {
        "format": "dualms-graph",
        "version": 1,
        "meta": dict(meta or {}),
        "vertices": graph.vertices.tolist(),
        "edges": [[int(u), int(v), float(w)] for (u, v), w in zip(graph.edges, graph.weights)],
        "pinned": {str(k): v for k, v in sorted(graph.pinned.items())},
    }


def save_graph(graph, path, meta=None):
    Path(path).write_text(json.dumps(graph_to_dict(graph, meta), sort_keys=True) + "\n")


def load_graph(path):
    spec = json.loads(Path(path).read_text())
    if spec.get("format") != "dualms-graph":
        raise ValueError(f"{path} is not a graph file")
    edges = np.asarray([e[:2] for e in spec["edges"]], dtype=np.int64).reshape(-1, 2)
    weights = np.asarray([e[2] for e in spec["edges"]], dtype=np.float64)
    pinned = {int(k): v for k, v in spec["pinned"].items()}
    return SpatialGraph(np.asarray(spec["vertices"], dtype=np.float64).reshape(-1, 3),
                        edges, weights, pinned)
