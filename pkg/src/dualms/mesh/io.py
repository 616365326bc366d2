"""OBJ / binary STL mesh files and raw float32 grid dumps."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .types import ScalarGrid, TriangleMesh

MESH_FORMATS = ("obj", "stl_binary")
_STL_RECORD = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def _wrap_io(path, exc):
    return OSError(f"{path}: {exc}")


def export_mesh(mesh, path, format="obj", header=None):
    """Write ``mesh``; ``header`` (str) goes into OBJ comments or the STL header."""
    if format not in MESH_FORMATS:
        raise ValueError(f"unknown mesh format {format!r}; expected one of {MESH_FORMATS}")
    path = Path(path)
    try:
        if format == "obj":
            _write_obj(mesh, path, header)
        else:
            _write_stl(mesh, path, header)
    except OSError as exc:
        raise _wrap_io(path, exc) from exc


def _write_obj(mesh, path, header):
    lines = [f"# {line}" for line in (header or "").splitlines()]
    lines += ["v %.9g %.9g %.9g" % tuple(v) for v in mesh.vertices]
    lines += ["f %d %d %d" % tuple(t + 1) for t in mesh.triangles]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _write_stl(mesh, path, header):
    head = (header or "dualms binary STL").encode()[:80].ljust(80, b" ")
    rec = np.zeros(mesh.n_triangles, dtype=_STL_RECORD)
    if mesh.n_triangles:
        n = mesh.triangle_normals()
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        rec["normal"] = n / np.where(norm > 0, norm, 1.0)
        rec["v"] = mesh.corners()
    path.write_bytes(head + struct.pack("<I", mesh.n_triangles) + rec.tobytes())


def load_mesh(path):
    """Read an OBJ or binary STL file (STL corners are merged by exact coordinates)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise _wrap_io(path, exc) from exc
    if path.suffix.lower() == ".stl":
        return _read_stl(data, path)
    return _read_obj(data.decode())


def _read_obj(text):
    verts, tris = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            tris.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return TriangleMesh(np.asarray(verts).reshape(-1, 3), np.asarray(tris, dtype=np.int64).reshape(-1, 3))


def _read_stl(data, path):
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) != 84 + 50 * count:
        raise ValueError(f"{path}: size {len(data)} does not match {count} STL records")
    rec = np.frombuffer(data, dtype=_STL_RECORD, count=count, offset=84)
    corners = rec["v"].reshape(-1, 3).astype(np.float64)
    verts, inverse = np.unique(corners, axis=0, return_inverse=True)
    return TriangleMesh(verts, inverse.reshape(-1, 3))


def save_grid(grid, path, meta=None):
    """Raw little-endian float32 (C order) plus ``<path>.json``; inactive nodes are NaN."""
    path = Path(path)
    vals = np.where(grid.active, grid.values, np.nan).astype("<f4")
    path.write_bytes(vals.tobytes(order="C"))
    header = {"dims": list(grid.resolution), "origin": list(grid.origin),
              "spacing": list(grid.spacing), "dtype": "float32", "order": "C",
              "masked_as": "nan", "meta": dict(meta or {})}
    Path(str(path) + ".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def load_grid(path):
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    vals = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(header["dims"]).astype(np.float64)
    mask = np.isfinite(vals)
    return ScalarGrid(np.where(mask, vals, 0.0), header["origin"], header["spacing"],
                      None if mask.all() else mask)
