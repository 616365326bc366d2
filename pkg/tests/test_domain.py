import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualms.config import data_path
from dualms.domain import (Box, ConstantFlow, Cylinder, DesignDomain, Difference, Intersection,
                           PolylineFlow, Port, Sphere, UTurnFlow, Union, domain_from_dict,
                           estimate_volume, flow_at, load_domain, load_voxels, sample_interior,
                           save_domain, save_voxels, unit_cube)
from dualms.exceptions import DomainEmpty, InvalidDomain


def test_contains_unit_cube():
    cube = unit_cube()
    assert cube.contains((0.5, 0.5, 0.5))
    assert not cube.contains((1.5, 0, 0))


def test_u_shape_notch_is_outside():
    u = load_domain(data_path("u_shape.json"))
    assert not u.contains((0.5, 0.65, 0.15))
    assert u.contains((0.15, 0.65, 0.15)) and u.contains((0.5, 0.15, 0.15))


def test_csg_primitives():
    s = Sphere((0, 0, 0), 1.0)
    c = Cylinder((0, 0, -1), (0, 0, 1), 0.5)
    pts = np.array([[0, 0, 0], [0.9, 0, 0], [0, 0, 0.99], [0.6, 0, 0]], float)
    np.testing.assert_array_equal(Intersection((s, c)).contains(pts), [True, False, True, False])
    np.testing.assert_array_equal(Difference(s, (c,)).contains(pts), [False, True, False, True])
    lo, hi = Cylinder((0, 0, 0), (1, 0, 0), 0.2).bounds()
    np.testing.assert_allclose(lo, [0, -0.2, -0.2])
    np.testing.assert_allclose(hi, [1, 0.2, 0.2])


def test_constant_flow():
    np.testing.assert_array_equal(flow_at(ConstantFlow((1, 0, 0)), (0.3, 0.2, 0.9)), [1, 0, 0])


def test_polyline_flow_nearest_segment():
    f = PolylineFlow(((0, 0, 0), (1, 0, 0), (1, 1, 0)))
    np.testing.assert_allclose(flow_at(f, (0.5, 0.1, 0)), [1, 0, 0])
    np.testing.assert_allclose(flow_at(f, (0.9, 0.6, 0)), [0, 1, 0])


def test_u_turn_tangent_perpendicular_to_radius():
    f = UTurnFlow((0.5, 0.5, 0.0), axis=(0, 0, 1), bend=(0, 1, 0))
    p = np.array([0.5, 1.0, 0.5])
    v = flow_at(f, p)
    radius = p - np.array([0.5, 0.5, 0.5])
    assert abs(v @ radius) < 1e-12
    assert abs(np.linalg.norm(v) - 1) < 1e-12
    assert abs(v[2]) < 1e-12


def test_u_turn_legs_are_straight():
    f = UTurnFlow((0.5, 0.3, 0.15))
    legs = np.array([[0.15, 0.6, 0.15], [0.15, 0.9, 0.15], [0.85, 0.6, 0.15]])
    v = f(legs)
    np.testing.assert_allclose(np.abs(v[:, 1]), 1.0, atol=1e-12)
    # opposite legs run in opposite directions
    assert v[0, 1] * v[2, 1] < 0


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_flow_fields_unit_length(p):
    fields = [ConstantFlow((1, 2, 3)), PolylineFlow(((0, 0, 0), (1, 0, 0), (1, 1, 1)), 0.3),
              PolylineFlow(((0, 0, 0), (0, 1, 0))), UTurnFlow((0.5, 0.5, 0.5))]
    for f in fields:
        v = flow_at(f, p)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-9


def test_flow_outside_domain_zero():
    dom = unit_cube(flow=ConstantFlow((0, 1, 0)))
    np.testing.assert_array_equal(dom.flow_at((2.0, 0, 0)), [0, 0, 0])
    np.testing.assert_array_equal(dom.flow_at((0.5, 0.5, 0.5)), [0, 1, 0])


def test_sample_interior_examples():
    pts = sample_interior(unit_cube(), 100, seed=7)
    assert pts.shape == (100, 3) and np.all((pts >= 0) & (pts <= 1))
    ball = DesignDomain(Sphere((0.5, 0.5, 0.5), 0.4))
    p = sample_interior(ball, 1000, seed=1)
    assert np.all(np.linalg.norm(p - 0.5, axis=1) < 0.4)


def test_sample_interior_empty_domain():
    empty = DesignDomain(Intersection((Box((0, 0, 0), (1, 1, 1)), Box((2, 2, 2), (3, 3, 3)))))
    with pytest.raises(DomainEmpty):
        sample_interior(empty, 10)
    hollow = DesignDomain(Difference(Box((0, 0, 0), (1, 1, 1)), (Box((-1, -1, -1), (2, 2, 2)),)))
    with pytest.raises(DomainEmpty):
        sample_interior(hollow, 10)


def test_sample_interior_determinism():
    a = sample_interior(unit_cube(), 50, seed=3)
    b = sample_interior(unit_cube(), 50, seed=3)
    c = sample_interior(unit_cube(), 50, seed=4)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_union_volume_inclusion_exclusion():
    a, b = Box((0, 0, 0), (1, 1, 1)), Box((0.5, 0, 0), (1.5, 1, 1))
    dom = DesignDomain(Union((a, b)))
    exact = a.volume() + b.volume() - 0.5
    assert abs(estimate_volume(dom, 10 ** 6, seed=0) - exact) / exact < 0.02
    disjoint = DesignDomain(Union((Box((0, 0, 0), (1, 1, 1)), Box((2, 0, 0), (3, 1, 1)))))
    assert abs(estimate_volume(disjoint, 10 ** 6) - 2.0) / 2.0 < 0.02


def test_voxel_domain_roundtrip(tmp_path):
    occ = np.zeros((4, 4, 4), np.uint8)
    occ[1:3, 1:3, 1:3] = 1
    shape = save_voxels(occ, (0, 0, 0), (0.25, 0.25, 0.25), tmp_path / "vox.raw")
    spec = {"shape": shape.to_dict()}
    dom = domain_from_dict(spec, base_dir=tmp_path)
    assert dom.contains((0.5, 0.5, 0.5))
    assert not dom.contains((0.1, 0.1, 0.1))
    loaded = load_voxels(tmp_path / "vox.raw")
    np.testing.assert_array_equal(loaded.occupancy, occ)


def test_domain_json_roundtrip(tmp_path):
    dom = load_domain(data_path("u_shape.json"))
    save_domain(dom, tmp_path / "d.json")
    again = load_domain(tmp_path / "d.json")
    assert again.to_dict() == dom.to_dict()


def test_validate_ports():
    with pytest.raises(InvalidDomain):
        Port((0, 0, 0), "C")
    bad = DesignDomain(Box((0, 0, 0), (1, 1, 1)), (Port((3, 3, 3), "A", "inlet"),))
    with pytest.raises(InvalidDomain):
        bad.validate()
    lonely = DesignDomain(Box((0, 0, 0), (1, 1, 1)), (Port((0, 0.5, 0.5), "A", "inlet"),))
    with pytest.raises(InvalidDomain):
        lonely.validate()


def test_shipped_domains_load():
    for name in ("unit_cube.json", "u_shape.json"):
        dom = load_domain(data_path(name))
        assert len(dom.ports) == 4
        assert json.loads(json.dumps(dom.to_dict()))
