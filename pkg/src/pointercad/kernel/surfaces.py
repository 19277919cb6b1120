"""Analytic carrier surfaces and curves attached to mesh provenance tags."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero-length direction")
    return v / n


def basis_for(n) -> tuple[np.ndarray, np.ndarray]:
    """Canonical in-plane basis for normal ``n``.

    e1 is the projection of the world axis least aligned with ``n``; ties go to
    the lowest axis so the choice is stable.
    """
    n = unit(n)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    e1 = unit(axis - axis.dot(n) * n)
    return e1, np.cross(n, e1)


def _vec(v) -> list[float]:
    return [float(c) for c in v]


@dataclass(frozen=True, eq=False)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    kind = "plane"
    periodic = (False, False)

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "normal", unit(self.normal))

    @property
    def basis(self):
        return basis_for(self.normal)

    def param(self, p):
        e1, e2 = self.basis
        d = np.asarray(p, dtype=float) - self.point
        return np.stack([d @ e1, d @ e2], axis=-1)

    def evaluate(self, u, v):
        e1, e2 = self.basis
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        return self.point + u * e1 + v * e2

    def normal_at(self, u, v):
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return np.broadcast_to(self.normal, shape + (3,)).copy()

    def curvature_at(self, u, v):
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(v)).shape)

    def distance(self, p):
        return (np.asarray(p, dtype=float) - self.point) @ self.normal

    def to_dict(self):
        return {"type": "plane", "point": _vec(self.point), "normal": _vec(self.normal)}


@dataclass(frozen=True, eq=False)
class Cylinder:
    axis_point: np.ndarray
    axis_dir: np.ndarray
    radius: float

    kind = "cylinder"
    periodic = (True, False)

    def __post_init__(self):
        object.__setattr__(self, "axis_point", np.asarray(self.axis_point, dtype=float))
        object.__setattr__(self, "axis_dir", unit(self.axis_dir))
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")

    @property
    def basis(self):
        return basis_for(self.axis_dir)

    def param(self, p):
        e1, e2 = self.basis
        d = np.asarray(p, dtype=float) - self.axis_point
        theta = np.mod(np.arctan2(d @ e2, d @ e1), TWO_PI)
        return np.stack([theta, d @ self.axis_dir], axis=-1)

    def radial(self, theta):
        e1, e2 = self.basis
        theta = np.asarray(theta, dtype=float)[..., None]
        return np.cos(theta) * e1 + np.sin(theta) * e2

    def evaluate(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        return self.axis_point + v * self.axis_dir + self.radius * self.radial(u)

    def normal_at(self, u, v):
        r = self.radial(u)
        return np.broadcast_to(r, np.broadcast(np.asarray(u), np.asarray(v)).shape + (3,)).copy()

    def curvature_at(self, u, v):
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(v)).shape)

    def to_dict(self):
        return {"type": "cylinder", "axis_point": _vec(self.axis_point), "axis_dir": _vec(self.axis_dir), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Cone:
    """Cone whose radius grows along ``axis_dir``: r(h) = h·tan(half_angle)."""

    apex: np.ndarray
    axis_dir: np.ndarray
    half_angle: float

    kind = "cone"
    periodic = (True, False)

    def __post_init__(self):
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float))
        object.__setattr__(self, "axis_dir", unit(self.axis_dir))
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("cone half angle must be in (0, pi/2)")

    @property
    def basis(self):
        return basis_for(self.axis_dir)

    def param(self, p):
        e1, e2 = self.basis
        d = np.asarray(p, dtype=float) - self.apex
        theta = np.mod(np.arctan2(d @ e2, d @ e1), TWO_PI)
        return np.stack([theta, d @ self.axis_dir], axis=-1)

    def radial(self, theta):
        e1, e2 = self.basis
        theta = np.asarray(theta, dtype=float)[..., None]
        return np.cos(theta) * e1 + np.sin(theta) * e2

    def evaluate(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        return self.apex + v * self.axis_dir + v * math.tan(self.half_angle) * self.radial(u)

    def normal_at(self, u, v):
        a = self.half_angle
        n = math.cos(a) * self.radial(u) - math.sin(a) * self.axis_dir
        return np.broadcast_to(n, np.broadcast(np.asarray(u), np.asarray(v)).shape + (3,)).copy()

    def curvature_at(self, u, v):
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(v)).shape)

    def to_dict(self):
        return {"type": "cone", "apex": _vec(self.apex), "axis_dir": _vec(self.axis_dir), "half_angle": float(self.half_angle)}


@dataclass(frozen=True, eq=False)
class Torus:
    """p(θ, φ) = c + (R + r cos φ)·radial(θ) + r sin φ·axis."""

    center: np.ndarray
    axis_dir: np.ndarray
    major_r: float
    minor_r: float

    kind = "torus"
    periodic = (True, True)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "axis_dir", unit(self.axis_dir))
        if not (self.major_r > 0 and self.minor_r > 0):
            raise ValueError("torus radii must be positive")

    @property
    def basis(self):
        return basis_for(self.axis_dir)

    def radial(self, theta):
        e1, e2 = self.basis
        theta = np.asarray(theta, dtype=float)[..., None]
        return np.cos(theta) * e1 + np.sin(theta) * e2

    def param(self, p):
        e1, e2 = self.basis
        d = np.asarray(p, dtype=float) - self.center
        theta = np.mod(np.arctan2(d @ e2, d @ e1), TWO_PI)
        rho = np.hypot(d @ e1, d @ e2) - self.major_r
        phi = np.mod(np.arctan2(d @ self.axis_dir, rho), TWO_PI)
        return np.stack([theta, phi], axis=-1)

    def evaluate(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        ring = self.major_r + self.minor_r * np.cos(v)
        return self.center + ring * self.radial(u) + self.minor_r * np.sin(v) * self.axis_dir

    def normal_at(self, u, v):
        v = np.asarray(v, dtype=float)[..., None]
        return np.cos(v) * self.radial(u) + np.sin(v) * self.axis_dir

    def curvature_at(self, u, v):
        cv = np.cos(np.asarray(v, dtype=float))
        K = cv / (self.minor_r * (self.major_r + self.minor_r * cv))
        return np.broadcast_to(K, np.broadcast(np.asarray(u), np.asarray(v)).shape).copy()

    def to_dict(self):
        return {
            "type": "torus",
            "center": _vec(self.center),
            "axis_dir": _vec(self.axis_dir),
            "major_r": float(self.major_r),
            "minor_r": float(self.minor_r),
        }


Surface = Plane | Cylinder | Cone | Torus


def surface_from_dict(d: dict) -> Surface:
    kind = d["type"]
    if kind == "plane":
        return Plane(d["point"], d["normal"])
    if kind == "cylinder":
        return Cylinder(d["axis_point"], d["axis_dir"], d["radius"])
    if kind == "cone":
        return Cone(d["apex"], d["axis_dir"], d["half_angle"])
    if kind == "torus":
        return Torus(d["center"], d["axis_dir"], d["major_r"], d["minor_r"])
    raise ValueError(f"unknown surface type {kind!r}")


# ---------------------------------------------------------------------------
# edge carriers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Line3:
    start: np.ndarray
    end: np.ndarray

    kind = "line"

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))

    @property
    def direction(self):
        return unit(self.end - self.start)

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.start + t * (self.end - self.start)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.end - self.start, t.shape + (3,)).copy()

    def to_dict(self):
        return {"type": "line", "start": _vec(self.start), "end": _vec(self.end)}


@dataclass(frozen=True, eq=False)
class Arc3:
    """Arc of a circle; parameter t in [0, 1] sweeps ``sweep`` radians about ``normal``."""

    center: np.ndarray
    normal: np.ndarray
    radius: float
    ref: np.ndarray
    sweep: float

    kind = "arc"

    def __post_init__(self):
        for name in ("center", "normal", "ref"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def _angles(self, t):
        return np.asarray(t, dtype=float) * self.sweep

    def evaluate(self, t):
        a = self._angles(t)[..., None]
        b = np.cross(self.normal, self.ref)
        return self.center + self.radius * (np.cos(a) * self.ref + np.sin(a) * b)

    def derivative(self, t):
        a = self._angles(t)[..., None]
        b = np.cross(self.normal, self.ref)
        return self.radius * self.sweep * (-np.sin(a) * self.ref + np.cos(a) * b)

    def to_dict(self):
        return {
            "type": self.kind,
            "center": _vec(self.center),
            "normal": _vec(self.normal),
            "radius": float(self.radius),
            "ref": _vec(self.ref),
            "sweep": float(self.sweep),
        }


class Circle3(Arc3):
    kind = "circle"

    def __init__(self, center, normal, radius, ref):
        super().__init__(np.asarray(center, float), unit(normal), float(radius), unit(ref), TWO_PI)


@dataclass(frozen=True, eq=False)
class Polyline3:
    """Fallback carrier for boundary chains that fit no analytic curve."""

    points: np.ndarray

    kind = "polyline"

    def _lengths(self):
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return seg, np.concatenate([[0.0], np.cumsum(seg)])

    def evaluate(self, t):
        seg, cum = self._lengths()
        s = np.asarray(t, dtype=float) * cum[-1]
        i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        f = ((s - cum[i]) / np.where(seg[i] > 0, seg[i], 1.0))[..., None]
        return self.points[i] + f * (self.points[i + 1] - self.points[i])

    def derivative(self, t):
        seg, cum = self._lengths()
        s = np.asarray(t, dtype=float) * cum[-1]
        i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        d = self.points[i + 1] - self.points[i]
        return d / np.where(seg[i] > 0, seg[i], 1.0)[..., None] * cum[-1]

    def to_dict(self):
        return {"type": "polyline", "points": [_vec(p) for p in self.points]}


def curve_from_dict(d: dict):
    kind = d["type"]
    if kind == "line":
        return Line3(np.asarray(d["start"], float), np.asarray(d["end"], float))
    if kind == "circle":
        return Circle3(d["center"], d["normal"], d["radius"], d["ref"])
    if kind == "arc":
        return Arc3(np.asarray(d["center"], float), unit(d["normal"]), float(d["radius"]), unit(d["ref"]), float(d["sweep"]))
    if kind == "polyline":
        return Polyline3(np.asarray(d["points"], float))
    raise ValueError(f"unknown curve type {kind!r}")
