"""Design domains, fluid ports and guidance flow fields.

A domain is either a CSG tree over boxes, spheres and capped cylinders, or a
binary voxel occupancy grid.  All queries are vectorised over ``(n, 3)``
point arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._random import make_rng
from .exceptions import DomainEmpty, InvalidDomain

FLUIDS = ("A", "B")
PORT_KINDS = ("inlet", "outlet")


def as_points(p):
    """Coerce ``p`` to a float64 ``(n, 3)`` array; also report if it was a single point."""
    arr = np.asarray(p, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 3 or arr.ndim != 2:
        raise ValueError(f"expected points of shape (n, 3), got {np.shape(p)}")
    return arr, single


def _unwrap(values, single):
    return values[0] if single else values


# ---------------------------------------------------------------- CSG shapes


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def contains(self, pts):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def bounds(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def volume(self):
        return float(np.prod(np.clip(np.subtract(self.hi, self.lo), 0, None)))

    def to_dict(self):
        return {"type": "box", "min": list(self.lo), "max": list(self.hi)}


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def contains(self, pts):
        d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=1)
        return d2 <= self.radius ** 2

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius

    def volume(self):
        return 4.0 / 3.0 * np.pi * self.radius ** 3

    def to_dict(self):
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Cylinder:
    """Capped cylinder between axis end points ``p0`` and ``p1``."""

    p0: tuple
    p1: tuple
    radius: float

    def contains(self, pts):
        a, b = np.asarray(self.p0, float), np.asarray(self.p1, float)
        axis = b - a
        length2 = axis @ axis
        t = (pts - a) @ axis / length2
        radial = pts - a - t[:, None] * axis
        return (t >= 0) & (t <= 1) & (np.sum(radial ** 2, axis=1) <= self.radius ** 2)

    def bounds(self):
        a, b = np.asarray(self.p0, float), np.asarray(self.p1, float)
        axis = (b - a) / np.linalg.norm(b - a)
        # exact extent of the end discs along each world axis
        ext = self.radius * np.sqrt(np.clip(1.0 - axis ** 2, 0.0, None))
        return np.minimum(a, b) - ext, np.maximum(a, b) + ext

    def volume(self):
        return np.pi * self.radius ** 2 * float(np.linalg.norm(np.subtract(self.p1, self.p0)))

    def to_dict(self):
        return {"type": "cylinder", "p0": list(self.p0), "p1": list(self.p1),
                "radius": self.radius}


@dataclass(frozen=True)
class Union:
    children: tuple

    def contains(self, pts):
        out = np.zeros(len(pts), dtype=bool)
        for child in self.children:
            out |= child.contains(pts)
        return out

    def bounds(self):
        lows, highs = zip(*(c.bounds() for c in self.children))
        return np.min(lows, axis=0), np.max(highs, axis=0)

    def to_dict(self):
        return {"type": "union", "children": [c.to_dict() for c in self.children]}


@dataclass(frozen=True)
class Intersection:
    children: tuple

    def contains(self, pts):
        out = np.ones(len(pts), dtype=bool)
        for child in self.children:
            out &= child.contains(pts)
        return out

    def bounds(self):
        lows, highs = zip(*(c.bounds() for c in self.children))
        return np.max(lows, axis=0), np.min(highs, axis=0)

    def to_dict(self):
        return {"type": "intersection", "children": [c.to_dict() for c in self.children]}


@dataclass(frozen=True)
class Difference:
    base: object
    subtract: tuple

    def contains(self, pts):
        out = self.base.contains(pts)
        for child in self.subtract:
            out &= ~child.contains(pts)
        return out

    def bounds(self):
        return self.base.bounds()

    def to_dict(self):
        return {"type": "difference", "base": self.base.to_dict(),
                "subtract": [c.to_dict() for c in self.subtract]}


@dataclass(frozen=True, eq=False)
class VoxelShape:
    """Occupancy grid; cell ``(i, j, k)`` spans ``origin + [i, i+1) * spacing``."""

    occupancy: np.ndarray
    origin: tuple
    spacing: tuple
    file: str | None = None

    def contains(self, pts):
        idx = np.floor((pts - np.asarray(self.origin)) / np.asarray(self.spacing)).astype(np.int64)
        dims = np.asarray(self.occupancy.shape)
        ok = np.all((idx >= 0) & (idx < dims), axis=1)
        out = np.zeros(len(pts), dtype=bool)
        i = idx[ok]
        out[ok] = self.occupancy[i[:, 0], i[:, 1], i[:, 2]] != 0
        return out

    def bounds(self):
        o = np.asarray(self.origin, float)
        return o, o + np.asarray(self.occupancy.shape) * np.asarray(self.spacing, float)

    def to_dict(self):
        if self.file is None:
            raise InvalidDomain("voxel shape has no backing file; call save_voxels first")
        return {"type": "voxels", "file": self.file}


def save_voxels(occupancy, origin, spacing, path):
    """Write ``occupancy`` as raw uint8 plus a ``<path>.json`` header."""
    path = Path(path)
    occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
    path.write_bytes(occ.tobytes(order="C"))
    header = {"dims": list(occ.shape), "origin": list(map(float, origin)),
              "spacing": list(map(float, spacing)), "dtype": "uint8", "order": "C"}
    Path(str(path) + ".json").write_text(json.dumps(header, indent=2))
    return VoxelShape(occ, tuple(map(float, origin)), tuple(map(float, spacing)), path.name)


def load_voxels(path, name=None):
    path = Path(path)
    header_path = Path(str(path) + ".json")
    try:
        header = json.loads(header_path.read_text())
        raw = np.frombuffer(path.read_bytes(), dtype="<u1")
    except OSError as exc:
        raise InvalidDomain(f"cannot read voxel grid {path}: {exc}") from exc
    dims = tuple(header["dims"])
    if raw.size != int(np.prod(dims)):
        raise InvalidDomain(f"{path}: {raw.size} bytes, header expects {int(np.prod(dims))}")
    return VoxelShape(raw.reshape(dims), tuple(header["origin"]), tuple(header["spacing"]),
                      name or path.name)


def shape_from_dict(spec, base_dir="."):
    kind = spec.get("type")
    if kind == "box":
        return Box(tuple(spec["min"]), tuple(spec["max"]))
    if kind == "sphere":
        return Sphere(tuple(spec["center"]), float(spec["radius"]))
    if kind == "cylinder":
        return Cylinder(tuple(spec["p0"]), tuple(spec["p1"]), float(spec["radius"]))
    if kind == "union":
        return Union(tuple(shape_from_dict(c, base_dir) for c in spec["children"]))
    if kind == "intersection":
        return Intersection(tuple(shape_from_dict(c, base_dir) for c in spec["children"]))
    if kind == "difference":
        return Difference(shape_from_dict(spec["base"], base_dir),
                          tuple(shape_from_dict(c, base_dir) for c in spec["subtract"]))
    if kind == "voxels":
        return load_voxels(Path(base_dir) / spec["file"], name=spec["file"])
    raise InvalidDomain(f"unknown shape type {kind!r}")


# ---------------------------------------------------------------- flow fields


def _normalize_rows(v):
    n = np.linalg.norm(v, axis=1, keepdims=True)
    return np.divide(v, n, out=np.zeros_like(v), where=n > 0)


@dataclass(frozen=True)
class ConstantFlow:
    direction: tuple

    def __call__(self, pts):
        d = np.asarray(self.direction, float)
        return np.broadcast_to(d / np.linalg.norm(d), pts.shape).copy()

    def to_dict(self):
        return {"kind": "constant", "direction": list(self.direction)}


@dataclass(frozen=True)
class PolylineFlow:
    """Tangent of the nearest guide segment.

    With ``falloff`` set, segment tangents are blended with Gaussian weights
    of their distance instead of taking only the nearest one.
    """

    points: tuple
    falloff: float | None = None

    def __call__(self, pts):
        poly = np.asarray(self.points, float)
        a, b = poly[:-1], poly[1:]
        seg = b - a
        tangents = seg / np.linalg.norm(seg, axis=1, keepdims=True)
        t = np.einsum("nsk,sk->ns", pts[:, None, :] - a[None], seg) / np.sum(seg ** 2, axis=1)
        t = np.clip(t, 0.0, 1.0)
        closest = a[None] + t[..., None] * seg[None]
        dist = np.linalg.norm(pts[:, None, :] - closest, axis=2)
        if self.falloff is None:
            return tangents[np.argmin(dist, axis=1)]
        d = dist - dist.min(axis=1, keepdims=True)
        w = np.exp(-(d / self.falloff) ** 2)
        return _normalize_rows(w @ tangents)

    def to_dict(self):
        return {"kind": "polyline", "points": [list(p) for p in self.points],
                "falloff": self.falloff}


@dataclass(frozen=True)
class UTurnFlow:
    """Circular flow around ``axis`` through ``center`` on the ``bend`` side.

    Points in the half-space ``(p - center) . bend >= 0`` follow the arc
    tangent ``axis x r``; the other half keeps the arc tangent of its lateral
    offset, i.e. straight inflow/outflow legs that join the arc continuously.
    """

    center: tuple
    axis: tuple = (0.0, 0.0, 1.0)
    bend: tuple = (0.0, -1.0, 0.0)

    def __call__(self, pts):
        c = np.asarray(self.center, float)
        ax = np.asarray(self.axis, float)
        ax = ax / np.linalg.norm(ax)
        bend = np.asarray(self.bend, float)
        bend = bend - (bend @ ax) * ax
        bend = bend / np.linalg.norm(bend)
        r = pts - c
        r = r - np.outer(r @ ax, ax)
        along = r @ bend
        straight = along < 0
        r[straight] -= np.outer(along[straight], bend)
        # on the axis itself pick the lateral direction so the field stays defined
        degenerate = np.linalg.norm(r, axis=1) < 1e-12
        r[degenerate] = np.cross(bend, ax)
        return _normalize_rows(np.cross(ax, r))

    def to_dict(self):
        return {"kind": "u_turn", "center": list(self.center), "axis": list(self.axis),
                "bend": list(self.bend)}


def flow_from_dict(spec):
    kind = spec.get("kind")
    if kind == "constant":
        return ConstantFlow(tuple(spec["direction"]))
    if kind == "polyline":
        return PolylineFlow(tuple(tuple(p) for p in spec["points"]), spec.get("falloff"))
    if kind == "u_turn":
        return UTurnFlow(tuple(spec["center"]), tuple(spec.get("axis", (0, 0, 1))),
                         tuple(spec.get("bend", (0, -1, 0))))
    raise InvalidDomain(f"unknown flow kind {kind!r}")


# ---------------------------------------------------------------- domain


@dataclass(frozen=True)
class Port:
    position: tuple
    fluid: str
    kind: str = "inlet"

    def __post_init__(self):
        if self.fluid not in FLUIDS:
            raise InvalidDomain(f"port fluid must be one of {FLUIDS}, got {self.fluid!r}")
        if self.kind not in PORT_KINDS:
            raise InvalidDomain(f"port kind must be one of {PORT_KINDS}, got {self.kind!r}")

    def to_dict(self):
        return {"position": list(self.position), "fluid": self.fluid, "kind": self.kind}


@dataclass(frozen=True, eq=False)
class DesignDomain:
    shape: object
    ports: tuple = ()
    flow: object = None
    name: str = "domain"
    _bbox: tuple = field(default=None, repr=False)

    @property
    def bbox(self):
        if self._bbox is not None:
            return self._bbox
        lo, hi = self.shape.bounds()
        return np.asarray(lo, float), np.asarray(hi, float)

    def contains(self, p):
        pts, single = as_points(p)
        return _unwrap(self.shape.contains(pts), single)

    def flow_at(self, p):
        """Guidance vector at ``p``; the zero vector outside the domain."""
        if self.flow is None:
            raise InvalidDomain("domain has no flow field")
        pts, single = as_points(p)
        out = np.zeros_like(pts)
        inside = self.shape.contains(pts)
        if inside.any():
            out[inside] = self.flow(pts[inside])
        return _unwrap(out, single)

    def port_touches(self, port, eps=1e-6):
        """True when some point within ``eps`` of the port lies inside."""
        offsets = np.vstack([np.zeros(3), np.eye(3), -np.eye(3)]) * eps
        return bool(self.shape.contains(np.asarray(port.position) + offsets).any())

    def validate(self):
        lo, hi = self.bbox
        if np.any(hi <= lo):
            raise InvalidDomain(f"{self.name}: empty bounding box")
        for port in self.ports:
            if not self.port_touches(port):
                raise InvalidDomain(f"{self.name}: port at {port.position} does not touch the domain")
        if self.ports:
            for fluid in FLUIDS:
                kinds = {p.kind for p in self.ports if p.fluid == fluid}
                if kinds != set(PORT_KINDS):
                    raise InvalidDomain(
                        f"{self.name}: fluid {fluid} needs at least one inlet and one outlet")
        return self

    def to_dict(self):
        out = {"name": self.name, "shape": self.shape.to_dict(),
               "ports": [p.to_dict() for p in self.ports]}
        if self.flow is not None:
            out["flow"] = self.flow.to_dict()
        return out


def flow_at(field, p):
    """Evaluate a bare flow field (no domain clipping)."""
    pts, single = as_points(p)
    return _unwrap(field(pts), single)


def domain_from_dict(spec, base_dir=".", validate=True):
    ports = tuple(Port(tuple(p["position"]), p["fluid"], p.get("kind", "inlet"))
                  for p in spec.get("ports", []))
    flow = flow_from_dict(spec["flow"]) if "flow" in spec else None
    dom = DesignDomain(shape_from_dict(spec["shape"], base_dir), ports, flow,
                       spec.get("name", "domain"))
    return dom.validate() if validate else dom


def load_domain(path, validate=True):
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidDomain(f"cannot read domain file {path}: {exc}") from exc
    return domain_from_dict(spec, base_dir=path.parent, validate=validate)


def save_domain(domain, path):
    Path(path).write_text(json.dumps(domain.to_dict(), indent=2, sort_keys=True))


# ---------------------------------------------------------------- sampling

PROBE_SAMPLES = 100_000


def _uniform_in_box(rng, lo, hi, n):
    return lo + (hi - lo) * rng.random((n, 3))


class DomainSampler:
    """Uniform rejection sampler with the bbox hit rate probed once up front."""

    def __init__(self, domain, seed=0):
        self.domain = domain
        self.lo, self.hi = domain.bbox
        if np.any(self.hi <= self.lo):
            raise DomainEmpty("bounding box has no volume")
        probe = _uniform_in_box(make_rng(seed, "sampler_probe"), self.lo, self.hi, PROBE_SAMPLES)
        self.hit_rate = float(domain.shape.contains(probe).mean())
        if self.hit_rate == 0:
            raise DomainEmpty(f"no interior hit in {PROBE_SAMPLES} probe samples")

    def sample(self, n, rng):
        chunks, have = [], 0
        while have < n:
            batch = _uniform_in_box(rng, self.lo, self.hi, int(1.2 * (n - have) / self.hit_rate) + 64)
            batch = batch[self.domain.shape.contains(batch)][: n - have]
            chunks.append(batch)
            have += len(batch)
        return np.concatenate(chunks)[:n]


def sample_interior(domain, n, seed=0):
    """Rejection-sample ``n`` points inside ``domain`` (deterministic per seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, "sample_interior")
    sampler = DomainSampler(domain, seed=rng.integers(2 ** 63))
    return sampler.sample(n, rng)


def estimate_volume(domain, n_samples=1_000_000, seed=0):
    lo, hi = domain.bbox
    rng = make_rng(seed, "estimate_volume")
    pts = _uniform_in_box(rng, lo, hi, n_samples)
    return float(np.prod(hi - lo) * domain.shape.contains(pts).mean())


def unit_cube(ports: Sequence[Port] = (), flow=None):
    return DesignDomain(Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), tuple(ports), flow, "unit_cube")
