import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualms.config import data_path
from dualms.domain import load_domain
from dualms.exceptions import InfeasibleStart, NotFeasible, TooLarge
from dualms.graph import build_graph, graph_from_edges
from dualms.maxcut import (ConnectedMaxCut, CutTrace, Partition, brute_force, check_feasibility,
                           cut_value, extract_skeletons, initial_partition, intra_weight,
                           is_feasible, load_skeleton, optimize, save_skeleton)

from graphs import complete, cycle, octahedron, prism, random_geometric

K6_TRIANGLES = Partition.from_sides(6, [0, 1, 2])


def enumerate_feasible(graph):
    n = graph.n_vertices
    best = None
    for bits in itertools.product((1, -1), repeat=n):
        part = Partition(np.array(bits))
        if check_feasibility(graph, part).ok:
            v = cut_value(graph, part)
            best = v if best is None else max(best, v)
    return best


def test_cut_value_examples():
    assert cut_value(complete(6), K6_TRIANGLES) == 9
    assert cut_value(complete(6), Partition(np.ones(6))) == 0
    g = graph_from_edges(2, [(0, 1)], [5.0])
    assert cut_value(g, Partition([1, -1])) == 5


def test_feasibility_examples():
    assert is_feasible(complete(6), K6_TRIANGLES)
    report = check_feasibility(cycle(6), Partition.from_sides(6, [0, 1, 2]))
    assert not report
    degree_bad = {v for viol in report.violations if "degree" in viol.constraint for v in viol.vertices}
    assert len(degree_bad) == 4
    assert not is_feasible(complete(6), Partition(np.ones(6)))


def test_feasibility_respects_pins():
    g = complete(6).with_pins({0: "B"})
    assert not is_feasible(g, K6_TRIANGLES)
    assert is_feasible(g, Partition(-K6_TRIANGLES.labels))


def test_initial_partition_k6_with_seeds():
    g = complete(6).with_pins({0: "A", 3: "B"})
    part = initial_partition(g, seed=0)
    assert is_feasible(g, part)
    assert part.labels[0] == 1 and part.labels[3] == -1
    assert sorted([len(part.side(1)), len(part.side(-1))]) == [3, 3]


def test_initial_partition_cycle_infeasible():
    with pytest.raises(InfeasibleStart):
        initial_partition(cycle(6))


def test_initial_partition_single_fluid_pins():
    g = complete(7).with_pins({2: "A"})
    a = initial_partition(g, seed=11)
    b = initial_partition(g, seed=11)
    assert is_feasible(g, a)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_optimize_octahedron():
    g = octahedron()
    assert len(g.edges) == 12
    part, trace = optimize(g, initial_partition(g))
    assert cut_value(g, part) == 6
    assert is_feasible(g, part)


def test_optimize_k6_already_optimal():
    part, trace = optimize(complete(6), K6_TRIANGLES)
    assert len(trace) == 1 and trace.n_flips == 0
    np.testing.assert_array_equal(part.labels, K6_TRIANGLES.labels)


def test_optimize_zero_rounds():
    g = complete(8)
    start = Partition.from_sides(8, [0, 1, 2])
    part, trace = optimize(g, start, max_rounds=0)
    np.testing.assert_array_equal(part.labels, start.labels)
    assert len(trace) == 1


def test_optimize_rejects_infeasible():
    with pytest.raises(NotFeasible):
        optimize(complete(6), Partition(np.ones(6)))


def test_brute_force_examples():
    assert brute_force(complete(6))[1] == 9
    assert brute_force(cycle(6)) == (None, None)
    part, w = brute_force(prism())
    assert w == 3
    assert set(part.side(part.labels[0])) in ({0, 1, 2}, {3, 4, 5})
    assert brute_force(octahedron())[1] == 6


def test_brute_force_matches_plain_enumeration():
    for seed in range(6):
        g = random_geometric(seed, n=9)
        _, w = brute_force(g)
        assert w == enumerate_feasible(g)


def test_brute_force_limit():
    with pytest.raises(TooLarge):
        brute_force(complete(21))


@given(st.integers(0, 10 ** 6), st.lists(st.sampled_from([1, -1]), min_size=10, max_size=10))
def test_cut_plus_intra_is_total(seed, labels):
    g = random_geometric(seed)
    part = Partition(np.array(labels))
    assert abs(cut_value(g, part) + intra_weight(g, part) - g.total_weight) < 1e-9


def _feasible_graph(seed):
    for k in range(50):
        g = random_geometric(seed * 100 + k, n=10)
        try:
            return g, initial_partition(g, seed=seed)
        except InfeasibleStart:
            continue
    pytest.skip("no feasible random graph found")


@given(st.integers(0, 10 ** 5))
def test_optimize_trace_monotone_and_feasible(seed):
    g, start = _feasible_graph(seed)
    part, trace = optimize(g, start)
    obj = trace.objectives
    assert np.all(np.diff(obj) > 0)
    assert obj[-1] <= g.total_weight
    assert is_feasible(g, part)
    assert abs(obj[-1] - cut_value(g, part)) < 1e-9


@given(st.integers(0, 10 ** 5), st.floats(0.01, 100))
def test_optimize_scale_invariance(seed, c):
    g, start = _feasible_graph(seed)
    scaled = graph_from_edges(g.n_vertices, g.edges, g.weights * c, g.vertices, g.pinned)
    p1, t1 = optimize(g, start)
    p2, t2 = optimize(scaled, start)
    assert [r.moved_vertex for r in t1.records] == [r.moved_vertex for r in t2.records]
    assert abs(cut_value(scaled, p2) - c * cut_value(g, p1)) <= 1e-9 * c * g.total_weight


def test_optimize_never_flips_pins():
    g = random_geometric(3, n=12)
    for k in range(50):
        g = random_geometric(300 + k, n=12)
        try:
            start = initial_partition(g)
        except InfeasibleStart:
            continue
        break
    pins = {int(start.side(1)[0]): "A", int(start.side(-1)[0]): "B"}
    g = g.with_pins(pins)
    part, _ = optimize(g, start)
    for v, fl in pins.items():
        assert part.labels[v] == (1 if fl == "A" else -1)


def test_estimator_api():
    g, _ = _feasible_graph(7)
    est = ConnectedMaxCut(n_init=4, random_state=3)
    assert est.get_params()["n_init"] == 4
    labels = est.fit_predict(g)
    assert is_feasible(g, Partition(labels))
    assert est.cut_value_ == cut_value(g, est.partition_)
    again = ConnectedMaxCut(n_init=4, random_state=3).fit(g)
    np.testing.assert_array_equal(again.labels_, labels)


def test_trace_and_skeleton_files(tmp_path):
    dom = load_domain(data_path("unit_cube.json"))
    g = build_graph(dom, n_vertices=80, cvt_iterations=3, density_samples=10000)
    est = ConnectedMaxCut().fit(g)
    est.trace_.to_csv(tmp_path / "t.csv", {"seed": 0})
    back = CutTrace.from_csv(tmp_path / "t.csv")
    assert back.records == est.trace_.records
    a, b = extract_skeletons(g, est.partition_)
    assert len(a.vertices) + len(b.vertices) == g.n_vertices
    save_skeleton(a, tmp_path / "a.json")
    a2 = load_skeleton(tmp_path / "a.json")
    assert a2.vertices.tobytes() == a.vertices.tobytes()
    np.testing.assert_array_equal(a2.edges, a.edges)
    # every skeleton vertex keeps degree >= 2 inside its own skeleton
    deg = np.bincount(a.edges.ravel(), minlength=len(a.vertices))
    assert deg.min() >= 2
