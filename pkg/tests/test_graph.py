import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualms.config import data_path
from dualms.domain import ConstantFlow, DesignDomain, Port, Sphere, load_domain, unit_cube
from dualms.exceptions import DegenerateInput, PortConflict, ZeroFlow
from dualms.graph import (assign_weights, build_graph, cvt_relax, delaunay_edges, graph_from_edges,
                          load_graph, pin_ports, save_graph)

SQRT3 = np.sqrt(3.0)
TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)


def brute_delaunay_edges(pts):
    """Edges of all tetrahedra whose circumsphere holds no other point (general position)."""
    edges = set()
    for quad in itertools.combinations(range(len(pts)), 4):
        p = pts[list(quad)]
        a = 2 * (p[1:] - p[0])
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        b = np.sum(p[1:] ** 2 - p[0] ** 2, axis=1)
        c = np.linalg.solve(a, b)
        r2 = np.sum((p[0] - c) ** 2)
        others = np.delete(pts, list(quad), axis=0)
        if np.all(np.sum((others - c) ** 2, axis=1) > r2 * (1 + 1e-10)):
            edges.update(itertools.combinations(quad, 2))
    return np.array(sorted(edges))


def test_cvt_single_point_goes_to_centre():
    p = cvt_relax([[0.1, 0.9, 0.2]], unit_cube(), iterations=50, density_samples=10 ** 5)
    assert np.linalg.norm(p[0] - 0.5) < 0.01


def test_cvt_zero_iterations_identity():
    pts = np.random.default_rng(0).random((5, 3))
    np.testing.assert_array_equal(cvt_relax(pts, unit_cube(), iterations=0), pts)


def test_cvt_equalises_spacing():
    pts = np.random.default_rng(1).random((8, 3))
    out = cvt_relax(pts, unit_cube(), iterations=100, density_samples=20000, seed=2)
    d = np.linalg.norm(out[:, None] - out[None], axis=2)
    np.fill_diagonal(d, np.inf)
    nn = d.min(axis=1)
    assert nn.std() / nn.mean() < 0.25


def test_cvt_stays_inside_nonconvex():
    u = load_domain(data_path("u_shape.json"))
    from dualms.domain import sample_interior
    pts = cvt_relax(sample_interior(u, 40, seed=0), u, iterations=10, density_samples=20000)
    assert u.contains(pts).all()


def test_delaunay_tetrahedron():
    assert len(delaunay_edges(TETRA)) == 6


def test_delaunay_tetra_plus_centroid():
    pts = np.vstack([TETRA, TETRA.mean(axis=0)])
    e = delaunay_edges(pts)
    assert len(e) == 10
    np.testing.assert_array_equal(e, brute_delaunay_edges(pts))


def test_delaunay_collinear():
    with pytest.raises(DegenerateInput):
        delaunay_edges([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    with pytest.raises(DegenerateInput):
        delaunay_edges([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [4, 0, 0]])


@given(st.integers(0, 10 ** 6))
def test_delaunay_matches_oracle(seed):
    pts = np.random.default_rng(seed).random((9, 3))
    np.testing.assert_array_equal(delaunay_edges(pts), brute_delaunay_edges(pts))


def test_delaunay_contains_nearest_neighbour_graph():
    pts = np.random.default_rng(5).random((200, 3))
    e = {tuple(x) for x in delaunay_edges(pts)}
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    np.fill_diagonal(d, np.inf)
    for i, j in enumerate(d.argmin(axis=1)):
        assert (min(i, j), max(i, j)) in e


@pytest.mark.parametrize("direction, expected", [((1, 0, 0), 1.0), ((0, 1, 0), 5.0),
                                                  ((1, 1, 0), 1.0), ((1, 2, 0), 5.0)])
def test_weight_examples(direction, expected):
    pts = np.array([[0, 0, 0], direction], float)
    g = assign_weights(pts, [[0, 1]], ConstantFlow((1, 0, 0)))
    assert g.weights[0] == expected


def test_weights_need_penalty_above_one():
    with pytest.raises(ValueError):
        assign_weights(np.eye(3), [[0, 1]], ConstantFlow((1, 0, 0)), a=1.0)


def test_zero_flow():
    flow = lambda p: np.where(p[:, :1] > 0.5, 1.0, -1.0) * np.array([1.0, 0, 0])
    with pytest.raises(ZeroFlow):
        assign_weights(np.array([[0, 0, 0], [1, 0, 0]], float), [[0, 1]], flow)


def lattice(n=4):
    idx = np.array(list(itertools.product(range(n), repeat=3)))
    pts = idx / (n - 1)
    edges = []
    for i, j in itertools.combinations(range(len(idx)), 2):
        if np.abs(idx[i] - idx[j]).sum() == 1:
            edges.append((i, j))
    return pts, np.array(edges)


def test_lattice_weights_constant_flow():
    pts, edges = lattice()
    g = assign_weights(pts, edges, ConstantFlow((1, 0, 0)), a=5.0)
    d = np.abs(pts[g.edges[:, 1]] - pts[g.edges[:, 0]])
    assert np.all(g.weights[d[:, 0] > 0] == 1.0)
    assert np.all(g.weights[d[:, 0] == 0] == 5.0)


@given(st.integers(0, 10 ** 6))
def test_weights_symmetric_in_edge_direction(seed):
    r = np.random.default_rng(seed)
    pts = r.random((12, 3))
    e = delaunay_edges(pts)
    flow = ConstantFlow(tuple(r.normal(size=3)))
    g1 = assign_weights(pts, e, flow)
    # reversed endpoint order d = p_u - p_v must give the same weights
    d = pts[e[:, 0]] - pts[e[:, 1]]
    f = flow(pts)[e[:, 0]] + flow(pts)[e[:, 1]]
    cos = np.abs(np.sum(d * f, 1)) / np.linalg.norm(d, axis=1) / np.linalg.norm(f, axis=1)
    np.testing.assert_array_equal(g1.weights, np.where(cos < np.sqrt(0.5) - 1e-12, 5.0, 1.0))
    assert set(np.unique(g1.weights)) <= {1.0, 5.0}


def test_graph_invariants_from_build():
    dom = load_domain(data_path("unit_cube.json"))
    g = build_graph(dom, n_vertices=100, cvt_iterations=5, density_samples=10000, seed=0)
    assert np.all(g.edges[:, 0] < g.edges[:, 1])
    assert len(np.unique(g.edges, axis=0)) == len(g.edges)
    assert set(np.unique(g.weights)) <= {1.0, 5.0}
    assert g.is_connected()
    assert dom.contains(g.vertices).all()
    assert sorted(g.pinned.values()) == ["A", "A", "B", "B"]


def test_pin_two_ports_same_fluid():
    dom = DesignDomain(unit_cube().shape, (Port((0, 0.5, 0.5), "A"), Port((1, 0.5, 0.5), "A", "outlet")),
                       ConstantFlow((1, 0, 0)))
    g = build_graph(dom, n_vertices=100, cvt_iterations=3, density_samples=10000)
    assert list(g.pinned.values()) == ["A", "A"]


def test_pin_port_on_vertex():
    pts = np.random.default_rng(0).random((10, 3))
    g = graph_from_edges(10, delaunay_edges(pts), vertices=pts)
    dom = DesignDomain(unit_cube().shape, (Port(tuple(pts[7]), "B"),))
    assert pin_ports(g, dom).pinned == {7: "B"}


def test_port_conflict():
    pts = np.random.default_rng(0).random((10, 3))
    g = graph_from_edges(10, delaunay_edges(pts), vertices=pts)
    p = tuple(pts[3])
    dom = DesignDomain(unit_cube().shape, (Port(p, "A"), Port(p, "B")))
    with pytest.raises(PortConflict):
        pin_ports(g, dom)


def test_graph_file_roundtrip(tmp_path):
    dom = load_domain(data_path("unit_cube.json"))
    g = build_graph(dom, n_vertices=50, cvt_iterations=2, density_samples=5000, seed=3)
    save_graph(g, tmp_path / "g.json", {"k": 1})
    h = load_graph(tmp_path / "g.json")
    assert h.vertices.tobytes() == g.vertices.tobytes()
    assert h.edges.tobytes() == g.edges.tobytes()
    assert h.weights.tobytes() == g.weights.tobytes()
    assert h.pinned == g.pinned


@pytest.mark.parametrize("name", ["unit_cube.json", "u_shape.json"])
def test_shipped_domains_connected(name):
    dom = load_domain(data_path(name))
    g = build_graph(dom, n_vertices=300, cvt_iterations=10, density_samples=20000)
    assert g.is_connected()


def test_build_graph_needs_flow():
    from dualms.exceptions import InvalidDomain
    with pytest.raises(InvalidDomain):
        build_graph(DesignDomain(unit_cube().shape), n_vertices=20)


def test_sphere_domain_graph():
    dom = DesignDomain(Sphere((0, 0, 0), 1.0), flow=ConstantFlow((0, 0, 1)))
    g = build_graph(dom, n_vertices=80, cvt_iterations=5, density_samples=10000)
    assert dom.contains(g.vertices).all()
