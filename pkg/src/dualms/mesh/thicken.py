"""Wall thickening: fast-sweeping redistance, offset surfaces, channel connectivity."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from ..exceptions import InvalidThickness, ThicknessTooLarge
from .extract import marching_cubes
from .types import ScalarGrid, TriangleMesh

log = logging.getLogger(__name__)


@njit(cache=True)
def _interface_init(f, h, dist, frozen):
    """Distances at nodes next to a sign change, from per-axis linear crossings.

    The combination ``1 / sqrt(sum 1 / t_axis^2)`` is exact for planes.
    """
    nx, ny, nz = f.shape
    dims = (nx, ny, nz)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                fi = f[i, j, k]
                if fi == 0.0:
                    dist[i, j, k] = 0.0
                    frozen[i, j, k] = True
                    continue
                inv = 0.0
                hit = False
                for ax in range(3):
                    best = np.inf
                    for step in (-1, 1):
                        a = i + step if ax == 0 else i
                        b = j + step if ax == 1 else j
                        c = k + step if ax == 2 else k
                        pos = a if ax == 0 else (b if ax == 1 else c)
                        if pos < 0 or pos >= dims[ax]:
                            continue
                        fj = f[a, b, c]
                        if fi * fj <= 0.0:
                            t = h[ax] * abs(fi) / abs(fi - fj)
                            if t < best:
                                best = t
                    if best < np.inf:
                        hit = True
                        if best == 0.0:
                            inv = np.inf
                        else:
                            inv += 1.0 / (best * best)
                if hit:
                    dist[i, j, k] = 0.0 if inv == np.inf else 1.0 / np.sqrt(inv)
                    frozen[i, j, k] = True


@njit(cache=True)
def _godunov(a, h):
    # sort the three (neighbour value, spacing) pairs by value
    for p in range(3):
        for q in range(2 - p):
            if a[q] > a[q + 1]:
                a[q], a[q + 1] = a[q + 1], a[q]
                h[q], h[q + 1] = h[q + 1], h[q]
    u = a[0] + h[0]
    if u <= a[1]:
        return u
    sw = 0.0
    swa = 0.0
    swa2 = 0.0
    for n in range(2):
        w = 1.0 / (h[n] * h[n])
        sw += w
        swa += w * a[n]
        swa2 += w * a[n] * a[n]
    u = (swa + np.sqrt(max(swa * swa - sw * (swa2 - 1.0), 0.0))) / sw
    if u <= a[2]:
        return u
    w = 1.0 / (h[2] * h[2])
    sw += w
    swa += w * a[2]
    swa2 += w * a[2] * a[2]
    return (swa + np.sqrt(max(swa * swa - sw * (swa2 - 1.0), 0.0))) / sw


@njit(cache=True)
def _fast_sweep(dist, frozen, h, max_rounds, tol):
    nx, ny, nz = dist.shape
    a = np.empty(3)
    hh = np.empty(3)
    for _ in range(max_rounds):
        change = 0.0
        for sweep in range(8):
            si = 1 if sweep & 1 == 0 else -1
            sj = 1 if sweep & 2 == 0 else -1
            sk = 1 if sweep & 4 == 0 else -1
            for ii in range(nx):
                i = ii if si > 0 else nx - 1 - ii
                for jj in range(ny):
                    j = jj if sj > 0 else ny - 1 - jj
                    for kk in range(nz):
                        k = kk if sk > 0 else nz - 1 - kk
                        if frozen[i, j, k]:
                            continue
                        a[0] = min(dist[i - 1, j, k] if i > 0 else np.inf,
                                   dist[i + 1, j, k] if i < nx - 1 else np.inf)
                        a[1] = min(dist[i, j - 1, k] if j > 0 else np.inf,
                                   dist[i, j + 1, k] if j < ny - 1 else np.inf)
                        a[2] = min(dist[i, j, k - 1] if k > 0 else np.inf,
                                   dist[i, j, k + 1] if k < nz - 1 else np.inf)
                        hh[0] = h[0]
                        hh[1] = h[1]
                        hh[2] = h[2]
                        if a[0] == np.inf and a[1] == np.inf and a[2] == np.inf:
                            continue
                        u = _godunov(a, hh)
                        old = dist[i, j, k]
                        if u < old:
                            dist[i, j, k] = u
                            d = old - u if old < np.inf else np.inf
                            if d > change:
                                change = d
        if change <= tol:
            break


def redistance(grid, max_rounds=8):
    """Signed distance to the zero set of ``grid`` (sign of the values), by fast sweeping."""
    f = np.ascontiguousarray(grid.values, dtype=np.float64)
    h = np.asarray(grid.spacing, dtype=np.float64)
    dist = np.full(f.shape, np.inf)
    frozen = np.zeros(f.shape, dtype=np.bool_)
    _interface_init(f, h, dist, frozen)
    if not frozen.any():
        raise InvalidThickness("field has no zero crossing to redistance")
    _fast_sweep(dist, frozen, h, max_rounds, 1e-12 * float(h.min()))
    return grid.with_values(np.sign(f) * dist)


def _trapezoid_weights(shape):
    w = np.ones(shape)
    for ax, n in enumerate(shape):
        sl = [slice(None)] * 3
        for end in (0, n - 1):
            sl[ax] = end
            w[tuple(sl)] *= 0.5
    return w


def _smooth_heaviside(s, eps):
    out = np.clip(0.5 * (1 + s / eps + np.sin(np.pi * s / eps) / np.pi), 0.0, 1.0)
    return np.where(s > eps, 1.0, np.where(s < -eps, 0.0, out))


def wall_volume_fraction(distance, tau):
    """Wall volume over domain volume on the node lattice.

    Each active node carries its trapezoid-rule cell weight; the wall
    indicator ``|d| <= tau`` is smoothed over one grid spacing so the
    estimate does not jump with node alignment.
    """
    eps = float(max(distance.spacing))
    w = _trapezoid_weights(distance.resolution) * distance.active
    wall = _smooth_heaviside(tau - np.abs(distance.values), eps)
    return float((w * wall).sum() / w.sum())


def _closed_mesh(values, grid, fill):
    """Extract the zero set of ``values`` with inactive nodes and a pad layer set to ``fill`` < 0."""
    v = np.where(grid.active, values, fill)
    v = np.pad(v, 1, mode="constant", constant_values=fill)
    origin = np.asarray(grid.origin) - np.asarray(grid.spacing)
    return marching_cubes(ScalarGrid(v, origin, grid.spacing), 0.0, allow_empty=True)


def _channel_components(region):
    labels, n = ndimage.label(region)
    return labels, n


def _check_channel(region, grid, ports, fluid, n_before):
    if not region.any():
        raise ThicknessTooLarge(f"channel {fluid} vanished")
    labels, n = _channel_components(region)
    fluid_ports = [p for p in (ports or []) if p.fluid == fluid]
    if fluid_ports:
        nodes = grid.nodes()[region]
        comp = labels[region]
        seen = set()
        for port in fluid_ports:
            nearest = np.argmin(np.sum((nodes - np.asarray(port.position)) ** 2, axis=1))
            seen.add(int(comp[nearest]))
        if len(seen) > 1:
            raise ThicknessTooLarge(f"wall splits channel {fluid} between its ports")
    elif n > n_before:
        raise ThicknessTooLarge(f"wall splits channel {fluid} into {n} parts (was {n_before})")
    return n


@dataclass(frozen=True, eq=False)
class ThickenResult:
    wall: TriangleMesh
    channel_a: TriangleMesh
    channel_b: TriangleMesh
    volume_fraction: float
    tau: float
    distance: ScalarGrid


def thicken(grid, tau, ports=None, distance=None):
    """Offset the zero set by ``+-tau`` into a wall and two channel regions.

    Channel A is ``d > tau`` (positive side), channel B is ``d < -tau``; all
    three meshes are closed against the domain mask and the grid box.  With
    ``ports`` the check is that each fluid's ports share one channel
    component; without ports, thickening must not increase the number of
    components of either side.
    """
    h = float(max(grid.spacing))
    if not tau >= 2 * h:
        raise InvalidThickness(f"tau={tau} must be at least two grid spacings ({2 * h:.6g})")
    dist = distance if distance is not None else redistance(grid)
    d, active = dist.values, dist.active
    n_a0 = _channel_components((d > 0) & active)[1]
    n_b0 = _channel_components((d < 0) & active)[1]
    _check_channel((d > tau) & active, dist, ports, "A", n_a0)
    _check_channel((d < -tau) & active, dist, ports, "B", n_b0)
    fill = -h
    result = ThickenResult(
        wall=_closed_mesh(tau - np.abs(d), dist, fill),
        channel_a=_closed_mesh(d - tau, dist, fill),
        channel_b=_closed_mesh(-d - tau, dist, fill),
        volume_fraction=wall_volume_fraction(dist, tau),
        tau=float(tau),
        distance=dist,
    )
    log.info("thicken tau=%.4g volume fraction %.4f", tau, result.volume_fraction)
    return result


def thickness_for_volume_fraction(grid, target, tol=1e-5, distance=None, max_iter=60):
    """Bisect the half-thickness whose wall volume fraction equals ``target``."""
    if not 0 < target < 1:
        raise ValueError("target volume fraction must be in (0, 1)")
    dist = distance if distance is not None else redistance(grid)
    lo = 2 * float(max(grid.spacing))
    hi = float(np.abs(dist.values[dist.active]).max())
    if wall_volume_fraction(dist, lo) > target:
        raise InvalidThickness(f"target {target} needs a wall thinner than two grid spacings")
    if wall_volume_fraction(dist, hi) < target:
        raise ThicknessTooLarge(f"target {target} is not reachable on this grid")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if wall_volume_fraction(dist, mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)
