"""Profile evaluation: snapping, arc geometry, tessellation and loop nesting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import AmbiguousRegion, DegenerateGeometry, SelfIntersectingLoop
from ..grammar import Arc, Circle, Point2, Profile
from .frame import Frame

DEFAULT_SEGMENTS = 64


@dataclass(frozen=True)
class CurveSource:
    """Which AST curve produced a run of polygon segments."""

    kind: str  # line | arc | circle
    center: tuple[float, float] | None = None
    radius: float = 0.0


@dataclass(eq=False)
class RegionLoop:
    points: np.ndarray  # (n, 2) in-plane world offsets from the frame origin
    sources: np.ndarray  # (n,) index into PlanarRegion.curves, segment i -> i+1
    hole: bool = False

    @property
    def signed_area(self) -> float:
        return polygon_area(self.points)


@dataclass(eq=False)
class PlanarRegion:
    loops: list[RegionLoop]
    curves: list[CurveSource]

    @property
    def area(self) -> float:
        return float(sum(l.signed_area for l in self.loops))


def polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def arc_center(s, e, sweep_deg: float, orientation: str) -> tuple[np.ndarray, float]:
    """Center and radius of the arc from ``s`` to ``e`` turning through ``sweep_deg``."""
    s = np.asarray(s, dtype=float)
    e = np.asarray(e, dtype=float)
    chord = e - s
    c = float(np.linalg.norm(chord))
    if c == 0.0:
        raise DegenerateGeometry("arc with coincident end points")
    half = math.radians(sweep_deg) / 2.0
    left = np.array([-chord[1], chord[0]]) / c
    if orientation == "CW":
        left = -left
    center = 0.5 * (s + e) + left * (c / 2.0) / math.tan(half)
    return center, c / (2.0 * math.sin(half))


def arc_points(s, e, sweep_deg: float, orientation: str, segments: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Tessellated arc from ``s`` up to (not including) ``e``."""
    center, r = arc_center(s, e, sweep_deg, orientation)
    n = max(1, math.ceil(segments * sweep_deg / 360.0 - 1e-9))
    a0 = math.atan2(s[1] - center[1], s[0] - center[0])
    sign = -1.0 if orientation == "CW" else 1.0
    ang = a0 + sign * math.radians(sweep_deg) * np.arange(n) / n
    pts = center + r * np.column_stack([np.cos(ang), np.sin(ang)])
    pts[0] = s
    return pts, center, r


def circle_points(center, r: float, segments: int) -> np.ndarray:
    ang = 2.0 * math.pi * np.arange(segments) / segments
    return np.asarray(center) + r * np.column_stack([np.cos(ang), np.sin(ang)])


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def segments_cross(p: np.ndarray, q: np.ndarray, eps: float) -> np.ndarray:
    """Pairwise intersection (including touching) of segment sets p (n,2,2) and q (m,2,2)."""
    a, b = p[:, None, 0], p[:, None, 1]
    c, d = q[None, :, 0], q[None, :, 1]
    d1, d2 = _orient(c, d, a), _orient(c, d, b)
    d3, d4 = _orient(a, b, c), _orient(a, b, d)
    proper = (((d1 > eps) & (d2 < -eps)) | ((d1 < -eps) & (d2 > eps))) & (((d3 > eps) & (d4 < -eps)) | ((d3 < -eps) & (d4 > eps)))

    def on_seg(x, y, z, o):
        inside = (np.minimum(x[..., 0], y[..., 0]) - eps <= z[..., 0]) & (z[..., 0] <= np.maximum(x[..., 0], y[..., 0]) + eps)
        inside &= (np.minimum(x[..., 1], y[..., 1]) - eps <= z[..., 1]) & (z[..., 1] <= np.maximum(x[..., 1], y[..., 1]) + eps)
        return (np.abs(o) <= eps) & inside

    touch = on_seg(c, d, a, d1) | on_seg(c, d, b, d2) | on_seg(a, b, c, d3) | on_seg(a, b, d, d4)
    return proper | touch


def _segs(pts: np.ndarray) -> np.ndarray:
    return np.stack([pts, np.roll(pts, -1, axis=0)], axis=1)


def point_in_polygon(pt, poly: np.ndarray) -> bool:
    x, y = pt
    a = poly
    b = np.roll(poly, -1, axis=0)
    cond = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    return bool(np.count_nonzero(cond & (x < xint)) % 2)


def evaluate_profile(profile: Profile, frame: Frame, snap=None, segments: int = DEFAULT_SEGMENTS) -> PlanarRegion:
    """Turn ``profile`` into oriented polygons in the frame plane.

    ``snap(ref, world_point, plane_point, w)`` resolves a snap pointer; it is
    required only when the profile contains snapped points.
    """
    curves: list[CurveSource] = []
    loops: list[RegionLoop] = []

    def place(p: Point2) -> np.ndarray:
        local = frame.scale * np.array([p.x, p.y])
        if p.snap is None:
            return local
        if snap is None:
            raise DegenerateGeometry("snapped point without a snap resolver")
        world = snap(p.snap, frame.in_plane(local), frame.origin, frame.w)
        return frame.to_local(world)

    for loop in profile.loops:
        if len(loop.curves) == 1 and isinstance(loop.curves[0], Circle):
            c = loop.curves[0]
            center = place(c.center)
            r = frame.scale * c.radius
            curves.append(CurveSource("circle", tuple(center), r))
            pts = circle_points(center, r, segments)
            loops.append(RegionLoop(pts, np.full(len(pts), len(curves) - 1)))
            continue
        starts = [place(c.start) for c in loop.curves]
        pts_all, src_all = [], []
        for i, c in enumerate(loop.curves):
            s, e = starts[i], starts[(i + 1) % len(starts)]
            if isinstance(c, Arc):
                pts, center, r = arc_points(s, e, c.sweep, c.orientation, segments)
                curves.append(CurveSource("arc", tuple(center), r))
            else:
                pts = s[None, :]
                curves.append(CurveSource("line"))
            pts_all.append(pts)
            src_all.append(np.full(len(pts), len(curves) - 1))
        pts = np.vstack(pts_all)
        src = np.concatenate(src_all)
        # drop zero-length segments produced by snapping
        nxt = np.roll(pts, -1, axis=0)
        keep = np.linalg.norm(nxt - pts, axis=1) > 1e-12 * max(1.0, frame.scale)
        pts, src = pts[keep], src[keep]
        if len(pts) < 3:
            raise DegenerateGeometry("loop collapses to fewer than three points")
        loops.append(RegionLoop(pts, src))

    scale = max(1.0, float(max(np.abs(l.points).max() for l in loops)))
    eps = 1e-12 * scale * scale
    for l in loops:
        if abs(l.signed_area) <= eps:
            raise DegenerateGeometry("loop encloses no area")
        n = len(l.points)
        if n > 3:
            segs = _segs(l.points)
            hit = segments_cross(segs, segs, eps)
            idx = np.arange(n)
            adjacent = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (np.abs(idx[:, None] - idx[None, :]) == n - 1)
            if (hit & ~adjacent).any():
                raise SelfIntersectingLoop("loop crosses itself")
    for i, a in enumerate(loops):
        for b in loops[i + 1 :]:
            if segments_cross(_segs(a.points), _segs(b.points), eps).any():
                raise AmbiguousRegion("loops of one profile touch or cross")
    for i, l in enumerate(loops):
        depth = sum(point_in_polygon(l.points[0], o.points) for j, o in enumerate(loops) if j != i)
        l.hole = depth % 2 == 1
        ccw = l.signed_area > 0
        if ccw == l.hole:
            l.points = l.points[::-1].copy()
            # segment i of the reversed loop is the old segment n-2-i
            l.sources = np.roll(l.sources[::-1], -1).copy()
    return PlanarRegion(loops, curves)
