"""Extrusion and boolean combination of tagged solids."""

from __future__ import annotations

import itertools

import manifold3d
import numpy as np

from ..errors import DegenerateGeometry, EmptyResult, NonManifoldResult
from .frame import Frame
from .profile import PlanarRegion
from .solid import Solid
from .surfaces import Cylinder, Plane

_OPS = {
    "Join": manifold3d.OpType.Add,
    "New": manifold3d.OpType.Add,
    "Cut": manifold3d.OpType.Subtract,
    "Intersect": manifold3d.OpType.Intersect,
}


class TagAllocator:
    """Hands out surface tags; each step gets its own block of ids."""

    BLOCK = 1000

    def __init__(self, step: int):
        self._counter = itertools.count(self.BLOCK * (step + 1))

    def __call__(self) -> int:
        return next(self._counter)


def manifold_from_arrays(vertices, triangles, tags) -> manifold3d.Manifold:
    mesh = manifold3d.Mesh64(
        vert_properties=np.array(vertices, dtype=np.float64),
        tri_verts=np.array(triangles, dtype=np.uint64),
        face_id=np.array(tags, dtype=np.uint64),
    )
    man = manifold3d.Manifold(mesh)
    if man.status() != manifold3d.Error.NoError:
        raise NonManifoldResult(f"tool body rejected: {man.status()}")
    return man


# A tool face that lies on a model face up to rounding would leave a skin or
# crack thinner than float resolution.  Such faces are moved this far
# (relative to the program size) off the model face instead.
COPLANAR_SHIFT = 1e-9
COPLANAR_TOL = 1e-10


def _axis_aligned(frame: Frame) -> bool:
    return all(np.count_nonzero(a) == 1 for a in (frame.u, frame.v, frame.w))


def axis_aligned_model(solid: Solid) -> bool:
    """Every face is a plane normal to a coordinate axis."""
    return all(isinstance(f.surface, Plane) and np.count_nonzero(f.surface.normal) == 1 for f in solid.faces)


def coplanar_shifter(solid: Solid, op: str, size: float, frame: Frame):
    """Outward offset for a tool face given by (point, outward normal).

    Subtractive tools back off where they rest on the model from outside and
    move out of the material where they are flush with it from inside.  Cut
    tools also grow everywhere else and additive tools shrink, which
    separates tool edges lying on model edges.  That is skipped when the frame
    and every model face are axis-aligned planes, where all of it is exact.  Additive faces abutting the model from
    outside move into it.  An additive face continuing a model face is left
    alone when the two coincide exactly, which the boolean resolves, and
    otherwise steps back into the tool.
    """
    if solid.is_empty:
        return None
    planes = [(f.surface.point, f.sense * f.surface.normal) for f in solid.faces if isinstance(f.surface, Plane)]
    tol, d = COPLANAR_TOL * size, COPLANAR_SHIFT * size
    additive = op in ("New", "Join")
    exact = _axis_aligned(frame) and axis_aligned_model(solid)
    default = 0.0 if exact else {"Cut": d, "Join": -d, "New": -d}.get(op, 0.0)

    def shift(point, normal) -> float:
        for q, n in planes:
            c = float(normal @ n)
            gap = float((point - q) @ n)
            if abs(abs(c) - 1.0) > 1e-12 or abs(gap) > tol:
                continue
            if additive:
                if c < 0:
                    return d
                return 0.0 if gap == 0.0 and np.array_equal(normal, n) else -d
            return d if c > 0 else -d
        return default

    return shift


def _offset_loop(points: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Move each segment i -> i+1 of a closed polygon outward by ``offsets[i]``."""
    d = np.roll(points, -1, axis=0) - points
    n = np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]
    out = points.copy()
    for i in range(len(points)):
        a, b = i - 1, i
        if offsets[a] == 0 and offsets[b] == 0:
            continue
        M = np.array([n[a], n[b]])
        if abs(np.linalg.det(M)) < 1e-9:
            out[i] += n[b] * (offsets[b] or offsets[a])
        else:
            out[i] += np.linalg.solve(M, [offsets[a], offsets[b]])
    return out


def prism(region: PlanarRegion, frame: Frame, e_pos: float, e_neg: float, alloc: TagAllocator, shift=None):
    """Closed tagged prism swept from -e_neg to +e_pos along the frame normal.

    ``shift`` (see :func:`coplanar_shifter`) nudges faces off coincident model
    faces.  Returns the manifold and the surfaces of its tags.
    """
    if not e_pos + e_neg > 0:
        raise DegenerateGeometry("extrusion has zero height")
    w = frame.w
    loops = [l.points for l in region.loops]
    if shift is not None:
        e_pos += shift(frame.origin + e_pos * w, w)
        e_neg += shift(frame.origin - e_neg * w, -w)
        for k, loop in enumerate(region.loops):
            pts = loop.points
            d = np.roll(pts, -1, axis=0) - pts
            offsets = np.zeros(len(pts))
            for s in range(len(pts)):
                if region.curves[int(loop.sources[s])].kind == "line":
                    normal = d[s, 1] * frame.u - d[s, 0] * frame.v
                    offsets[s] = shift(frame.in_plane(pts[s]), normal / np.linalg.norm(normal))
            if offsets.any():
                loops[k] = _offset_loop(pts, offsets)
    polys = loops
    flat = np.vstack(polys)
    n = len(flat)
    base = frame.in_plane(flat)
    verts = np.vstack([base - e_neg * w, base + e_pos * w])
    cap = np.asarray(manifold3d.triangulate(polys), dtype=np.int64).reshape(-1, 3)
    if not len(cap):
        raise DegenerateGeometry("profile triangulates to nothing")
    top_tag, bottom_tag = alloc(), alloc()
    surfaces = {
        top_tag: Plane(frame.origin + e_pos * w, w),
        bottom_tag: Plane(frame.origin - e_neg * w, -w),
    }
    tris = [cap + n, cap[:, ::-1]]
    tags = [np.full(len(cap), top_tag), np.full(len(cap), bottom_tag)]
    wall_tag: dict[int, int] = {}
    offset = 0
    for loop, pts in zip(region.loops, loops):
        k = len(pts)
        i = np.arange(k) + offset
        j = (np.arange(k) + 1) % k + offset
        quads = np.concatenate([np.column_stack([i, j, j + n]), np.column_stack([i, j + n, i + n])])
        seg_tags = np.empty(k, dtype=np.int64)
        for s in range(k):
            src = int(loop.sources[s])
            if src not in wall_tag:
                wall_tag[src] = alloc()
                cs = region.curves[src]
                if cs.kind == "line":
                    a, b = pts[s], pts[(s + 1) % k]
                    d = b - a
                    normal = d[1] * frame.u - d[0] * frame.v
                    surfaces[wall_tag[src]] = Plane(frame.in_plane(a), normal)
                else:
                    surfaces[wall_tag[src]] = Cylinder(frame.in_plane(np.asarray(cs.center)), w, cs.radius)
            seg_tags[s] = wall_tag[src]
        tris.append(quads)
        tags.append(np.concatenate([seg_tags, seg_tags]))
        offset += k
    return manifold_from_arrays(verts, np.vstack(tris), np.concatenate(tags)), surfaces


def combine(solid: Solid, tool: manifold3d.Manifold, tool_surfaces: dict, op: str) -> Solid:
    """Apply boolean ``op`` between ``solid`` and the tool body."""
    surfaces = {**solid.surfaces, **tool_surfaces}
    if solid.is_empty:
        if op == "Cut" or op == "Intersect":
            raise EmptyResult(f"{op} on an empty model")
        result = tool
    else:
        result = manifold3d.Manifold.batch_boolean([solid.to_manifold(), tool], _OPS[op])
    return finish(result, surfaces)


def finish(result: manifold3d.Manifold, surfaces: dict) -> Solid:
    if result.status() != manifold3d.Error.NoError:
        raise NonManifoldResult(f"boolean failed: {result.status()}")
    if result.is_empty() or result.volume() <= 1e-15:
        raise EmptyResult("operation left no material")
    # drops the zero-area triangles exact coincidences can leave behind
    return Solid.from_manifold(result.simplify(0.0), surfaces)


def extrude(region: PlanarRegion, frame: Frame, e_pos: float, e_neg: float, op: str, solid: Solid, alloc: TagAllocator) -> Solid:
    tool, surfaces = prism(region, frame, e_pos, e_neg, alloc)
    return combine(solid, tool, surfaces, op)
