"""Closed-form reference fields: TPMS, distance-based equidistant surface, SDF primitives."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

TPMS_KINDS = ("gyroid", "schwarz_p", "iwp")


def tpms_field(kind, periods=1):
    """Level-set function of a triply periodic minimal surface.

    ``periods`` is a scalar or per-axis count per unit length.
    """
    if kind not in TPMS_KINDS:
        raise ValueError(f"unknown TPMS kind {kind!r}; expected one of {TPMS_KINDS}")
    per = np.broadcast_to(np.asarray(periods, dtype=np.float64), (3,)).copy()
    if np.any(per < 1):
        raise ValueError("periods must be >= 1")
    k = 2.0 * np.pi * per

    def f(pts):
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64)) * k
        X, Y, Z = p[:, 0], p[:, 1], p[:, 2]
        if kind == "gyroid":
            return np.sin(X) * np.cos(Y) + np.sin(Y) * np.cos(Z) + np.sin(Z) * np.cos(X)
        if kind == "schwarz_p":
            return np.cos(X) + np.cos(Y) + np.cos(Z)
        cx, cy, cz = np.cos(X), np.cos(Y), np.cos(Z)
        return 2 * (cx * cy + cy * cz + cz * cx) - (np.cos(2 * X) + np.cos(2 * Y) + np.cos(2 * Z))

    f.kind, f.periods = kind, tuple(per)
    return f


def equidistant_field(points_a, points_b):
    """``g(x) = d(x, B) - d(x, A)``; positive on the A side."""
    a = np.asarray(points_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(points_b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both point sets must be nonempty")
    tree_a, tree_b = cKDTree(a), cKDTree(b)

    def g(pts):
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return tree_b.query(p)[0] - tree_a.query(p)[0]

    return g


def sphere_sdf(center, radius):
    c = np.asarray(center, dtype=np.float64)

    def f(pts):
        return np.linalg.norm(np.atleast_2d(pts) - c, axis=1) - radius

    return f


def cylinder_sdf(axis_point, axis_dir, radius):
    """Signed distance to an infinite cylinder."""
    o = np.asarray(axis_point, dtype=np.float64)
    d = np.asarray(axis_dir, dtype=np.float64)
    d = d / np.linalg.norm(d)

    def f(pts):
        r = np.atleast_2d(pts) - o
        radial = r - np.outer(r @ d, d)
        return np.linalg.norm(radial, axis=1) - radius

    return f


def plane_field(normal, offset):
    """``n . x - offset`` with ``n`` normalised."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)

    def f(pts):
        return np.atleast_2d(pts) @ n - offset

    return f
