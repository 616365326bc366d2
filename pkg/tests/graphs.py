"""Small named graphs used across the max-cut tests."""
import itertools

import numpy as np

from dualms.graph import graph_from_edges


def complete(n, w=1.0):
    return graph_from_edges(n, list(itertools.combinations(range(n), 2)),
                            [w] * (n * (n - 1) // 2))


def cycle(n):
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def octahedron():
    # K_{2,2,2}: antipodal pairs (0,1), (2,3), (4,5) are the non-edges
    edges = [(u, v) for u, v in itertools.combinations(range(6), 2) if v != u + 1 or u % 2]
    return graph_from_edges(6, edges)


def prism():
    tri = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    return graph_from_edges(6, tri + [(0, 3), (1, 4), (2, 5)])


def random_geometric(seed, n=10):
    from dualms.graph import assign_weights, delaunay_edges
    from dualms.domain import ConstantFlow
    r = np.random.default_rng(seed)
    pts = r.random((n, 3))
    return assign_weights(pts, delaunay_edges(pts), ConstantFlow(tuple(r.normal(size=3))))
