"""Parametric domains of faces and the grid / curve samplers used for embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .solid import Edge, Face, Solid
from .surfaces import TWO_PI

FACE_CHANNELS = ("x", "y", "z", "nx", "ny", "nz", "K", "vis")
EDGE_CHANNELS = ("x", "y", "z", "tx", "ty", "tz", "rx", "ry", "rz", "dx", "dy", "dz")

_COVERAGE_SAMPLES = 1440


@dataclass(frozen=True, eq=False)
class UVDomain:
    """Rectangle in (u, v) plus the face's triangles mapped into it."""

    lo: np.ndarray
    hi: np.ndarray
    full: tuple[bool, bool]  # the face wraps all the way round in that parameter
    wraps: tuple[bool, bool]  # the parameter is periodic
    shift: np.ndarray  # subtracted from raw parameters before wrapping
    triangles: np.ndarray  # (m, 3, 2)

    def to_local(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float) - self.shift
        for k in range(2):
            if self.wraps[k]:
                uv[..., k] = np.mod(uv[..., k], TWO_PI)
        return uv


def _unwrap_triangles(uv: np.ndarray, k: int) -> np.ndarray:
    """Shift corner parameters so no triangle straddles the 2π seam."""
    ref = uv[:, :1, k]
    uv[:, :, k] = ref + np.mod(uv[:, :, k] - ref + math.pi, TWO_PI) - math.pi
    return uv


def _coverage_shift(tri_uv: np.ndarray, k: int) -> tuple[bool, float]:
    """Does the face cover the whole period in parameter k?  If not, where does its gap start?"""
    lo = tri_uv[:, :, k].min(axis=1)
    hi = tri_uv[:, :, k].max(axis=1)
    grid = (np.arange(_COVERAGE_SAMPLES) + 0.5) * TWO_PI / _COVERAGE_SAMPLES
    covered = np.zeros(_COVERAGE_SAMPLES, dtype=bool)
    for shift in (-TWO_PI, 0.0, TWO_PI):
        a = np.searchsorted(grid, lo + shift, side="left")
        b = np.searchsorted(grid, hi + shift, side="right")
        diff = np.zeros(_COVERAGE_SAMPLES + 1, dtype=np.int64)
        np.add.at(diff, np.clip(a, 0, _COVERAGE_SAMPLES), 1)
        np.add.at(diff, np.clip(b, 0, _COVERAGE_SAMPLES), -1)
        covered |= np.cumsum(diff)[:-1] > 0
    if covered.all():
        return True, 0.0
    # start the domain at the end of the widest uncovered run
    free = ~covered
    best_len, best_end, run = -1, 0, 0
    for i in range(2 * _COVERAGE_SAMPLES):
        if free[i % _COVERAGE_SAMPLES]:
            run += 1
            if run > best_len:
                best_len, best_end = run, i % _COVERAGE_SAMPLES
        else:
            run = 0
    return False, float(grid[best_end])


def face_domain(solid: Solid, face: Face) -> UVDomain:
    surface = face.surface
    corners = solid.vertices[solid.triangles[face.triangles]]
    uv = surface.param(corners.reshape(-1, 3)).reshape(-1, 3, 2)
    shift = np.zeros(2)
    wraps = [False, False]
    full = [False, False]
    for k in range(2):
        if surface.periodic[k]:
            uv = _unwrap_triangles(uv, k)
            is_full, start = _coverage_shift(uv, k)
            wraps[k] = True
            full[k] = is_full
            shift[k] = start
            uv[:, :, k] = uv[:, :, k] - start
            base = np.mod(uv[:, :1, k], TWO_PI)
            uv[:, :, k] = uv[:, :, k] - uv[:, :1, k] + base
    lo = uv.reshape(-1, 2).min(axis=0)
    hi = uv.reshape(-1, 2).max(axis=0)
    for k in range(2):
        if full[k]:
            lo[k], hi[k] = 0.0, TWO_PI
    return UVDomain(lo, hi, tuple(full), tuple(wraps), shift, uv)


def uv_contains(dom: UVDomain, uv: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Point-in-triangle test in parameter space; boundary points count as inside."""
    pts = np.atleast_2d(np.asarray(uv, dtype=float))
    tri = dom.triangles
    inside = np.zeros(len(pts), dtype=bool)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    scale = max(1.0, float(np.abs(tri).max()))
    tol = eps * scale * scale
    shifts = [np.zeros(2)]
    for k in range(2):
        if dom.wraps[k]:
            step = np.zeros(2)
            step[k] = TWO_PI
            shifts = [s + m * step for s in shifts for m in (-1, 0, 1)]
    for s in shifts:
        p = pts[:, None, :] + s

        def cr(x, y, z):
            return (y[..., 0] - x[..., 0]) * (z[..., 1] - x[..., 1]) - (y[..., 1] - x[..., 1]) * (z[..., 0] - x[..., 0])

        area = cr(a, b, c)[None, :]
        sgn = np.where(area >= 0, 1.0, -1.0)
        w0 = cr(b, c, p) * sgn
        w1 = cr(c, a, p) * sgn
        w2 = cr(a, b, p) * sgn
        hit = (w0 >= -tol) & (w1 >= -tol) & (w2 >= -tol) & (np.abs(area) > 0)
        inside |= hit.any(axis=1)
    return inside


def face_contains(solid: Solid, face: Face, points, eps: float = 1e-9) -> np.ndarray:
    """Do the (on-surface) world ``points`` fall inside the trimmed face?"""
    dom = face_domain(solid, face)
    uv = dom.to_local(face.surface.param(np.atleast_2d(points)))
    return uv_contains(dom, uv, eps)


def sample_face(solid: Solid, face: Face, n: int = 32) -> np.ndarray:
    """n×n×8 grid of (x, y, z, nx, ny, nz, K, vis) over the face's parameter domain."""
    dom = face_domain(solid, face)
    axes = []
    for k in range(2):
        if dom.full[k]:
            axes.append(np.arange(n) * TWO_PI / n)
        else:
            axes.append(np.linspace(dom.lo[k], dom.hi[k], n))
    U, V = np.meshgrid(axes[0], axes[1], indexing="ij")
    raw_u = U + dom.shift[0]
    raw_v = V + dom.shift[1]
    surface = face.surface
    xyz = surface.evaluate(raw_u, raw_v)
    nrm = face.sense * surface.normal_at(raw_u, raw_v)
    K = surface.curvature_at(raw_u, raw_v)
    vis = uv_contains(dom, np.column_stack([U.ravel(), V.ravel()])).reshape(n, n)
    return np.concatenate([xyz, nrm, K[..., None], vis[..., None].astype(float)], axis=-1)


def sample_edge(edge: Edge, n: int = 32) -> np.ndarray:
    """n×12 samples of (point, tangent, reversed tangent, derivative), uniform in parameter."""
    t = np.arange(n) / n if edge.closed else np.linspace(0.0, 1.0, n)
    pts = edge.curve.evaluate(t)
    der = edge.curve.derivative(t)
    norm = np.linalg.norm(der, axis=1, keepdims=True)
    tan = der / np.where(norm > 0, norm, 1.0)
    return np.concatenate([pts, tan, -tan, der], axis=1)
