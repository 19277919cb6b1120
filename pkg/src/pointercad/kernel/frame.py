"""Sketch-plane frames and snapping onto existing edges."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import tokens as T
from ..errors import DegenerateDirection, DegenerateProjection, NonPlanarSketchTarget, SnapFailure
from ..grammar import FrameSpec, Point2
from .surfaces import Arc3, Line3, Plane, Polyline3, unit

BASE_PLANE_SURFACES = {
    "Right": Plane((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
    "Front": Plane((0.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    "Top": Plane((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
}

# in-plane coordinate axes of the hint point for each world direction
_HINT_AXES = {0: (1, 2), 1: (2, 0), 2: (0, 1)}

PARALLEL_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class Frame:
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    scale: float  # world length of one sketch unit

    def to_world(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return self.origin + self.scale * (xy[..., :1] * self.u + xy[..., 1:2] * self.v)

    def to_local(self, p) -> np.ndarray:
        """World point -> in-plane offsets from the origin, in world units."""
        d = np.asarray(p, dtype=float) - self.origin
        return np.stack([d @ self.u, d @ self.v], axis=-1)

    def in_plane(self, local) -> np.ndarray:
        local = np.asarray(local, dtype=float)
        return self.origin + local[..., :1] * self.u + local[..., 1:2] * self.v

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([self.u, self.v, self.w])

    def canonical(self, ndigits: int = 9) -> tuple:
        vals = np.concatenate([self.origin, self.u, self.v, self.w, [self.scale]])
        return tuple(round(float(x), ndigits) + 0.0 for x in vals)


def hint_point(p: Point2, direction: str, origin, size: float) -> np.ndarray:
    """World point of a normalized hint lying on the coordinate plane orthogonal to ``direction``."""
    n = np.asarray(T.axis_vector(direction))
    i = int(np.argmax(np.abs(n)))
    a, b = _HINT_AXES[i]
    q = np.zeros(3)
    q[a] = origin[a] + size * p.x
    q[b] = origin[b] + size * p.y
    return q


def build_frame(plane, spec: FrameSpec, origin=(0.0, 0.0, 0.0), size: float = 1.0, snap=None) -> Frame:
    """Construct the sketch frame on ``plane`` (a :class:`Plane`).

    ``snap`` optionally maps a snap pointer plus a world point on the plane to
    the snapped world point; it is used for a snapped origin hint.
    """
    if not isinstance(plane, Plane):
        raise NonPlanarSketchTarget(f"sketch target is a {getattr(plane, 'kind', type(plane).__name__)}, not a plane")
    n = np.asarray(T.axis_vector(spec.direction), dtype=float)
    d = np.asarray(T.axis_vector(T.auxiliary_direction(spec.direction)), dtype=float)
    dot = float(plane.normal @ n)
    if abs(dot) <= PARALLEL_TOL:
        raise DegenerateDirection(f"plane normal is orthogonal to {spec.direction}")
    w = plane.normal if dot > 0 else -plane.normal
    u0 = d - (d @ w) * w
    if np.linalg.norm(u0) <= PARALLEL_TOL:
        raise DegenerateProjection("auxiliary direction is parallel to the plane normal")
    u0 = unit(u0)
    v0 = np.cross(w, u0)
    q = hint_point(spec.origin, spec.direction, origin, size)
    t = float((plane.point - q) @ w) / float(n @ w)
    o = q + t * n
    if snap is not None and spec.origin.snap is not None:
        o = snap(spec.origin.snap, o, plane.point, w)
    r = math.radians(spec.rotation)
    u = unit(math.cos(r) * u0 + math.sin(r) * v0)
    v = np.cross(w, u)
    return Frame(o, u, v, w.copy(), float(size * spec.scale))


def placement_frame(placement, origin, size: float) -> Frame:
    """Frame of an absolute legacy placement (Euler angles plus translation)."""
    from ..codec import matrix_from_euler_zyx

    R = matrix_from_euler_zyx(*placement.euler)
    o = np.asarray(origin, dtype=float) + size * np.asarray(placement.origin, dtype=float)
    return Frame(o, R[:, 0].copy(), R[:, 1].copy(), R[:, 2].copy(), float(size))


def snap_point(curve, p, plane_point, w) -> np.ndarray:
    """Nearest point to ``p`` on the projection of ``curve`` into the sketch plane.

    Lines snap to their infinite carrier, arcs and circles to the full
    circle.  A line normal to the plane projects to a single point.
    """
    p = np.asarray(p, dtype=float)

    def proj(x):
        return x - ((x - plane_point) @ w) * w

    if isinstance(curve, Line3):
        t = curve.direction
        c = abs(float(t @ w))
        if c >= 1 - PARALLEL_TOL:
            return proj(curve.start)
        if c <= PARALLEL_TOL:
            a = proj(curve.start)
            return a + ((proj(p) - a) @ t) * t
        raise SnapFailure("edge is oblique to the sketch plane")
    if isinstance(curve, Arc3):
        if abs(float(curve.normal @ w)) < 1 - PARALLEL_TOL:
            raise SnapFailure("circle is not parallel to the sketch plane")
        c = proj(curve.center)
        d = proj(p) - c
        dn = np.linalg.norm(d)
        if dn <= 1e-12 * max(curve.radius, 1.0):
            raise SnapFailure("point sits on the circle's axis")
        return c + curve.radius * d / dn
    if isinstance(curve, Polyline3):
        h = (curve.points - plane_point) @ w
        if np.ptp(h) > 1e-9 * max(1.0, np.abs(curve.points).max()):
            raise SnapFailure("polyline edge is not parallel to the sketch plane")
        pts = proj(curve.points)
        q = proj(p)
        a, b = pts[:-1], pts[1:]
        ab = b - a
        den = np.einsum("ij,ij->i", ab, ab)
        s = np.clip(np.einsum("ij,ij->i", q - a, ab) / np.where(den > 0, den, 1.0), 0.0, 1.0)
        near = a + s[:, None] * ab
        return near[int(np.argmin(np.linalg.norm(near - q, axis=1)))]
    raise SnapFailure(f"cannot snap to a {getattr(curve, 'kind', curve)!r} edge")
