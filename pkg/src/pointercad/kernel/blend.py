"""Chamfers and fillets as boolean subtraction of swept cutter bodies.

A cutter's cross-section lives in the plane normal to the edge.  With P the
edge point, d1/d2 the in-face directions pointing away from the edge and
n1/n2 the outward face normals, the section runs from A (on face 1) along the
bevel or blend to B (on face 2) and closes through points outside the solid.
"""

from __future__ import annotations

import math

import manifold3d
import numpy as np

from ..errors import ChamferTooLarge, FilletTooLarge, UnsupportedEdge
from .ops import COPLANAR_SHIFT, TagAllocator, axis_aligned_model, finish, manifold_from_arrays
from .sampling import face_contains
from .solid import Edge, Solid
from .surfaces import Arc3, Circle3, Cone, Cylinder, Line3, Plane, Torus, basis_for, unit

ANGLE_TOL = 1e-6


def _section(P, d1, d2, n1, n2, dist: float, kind: str, reach: float, segments: int):
    """Cross-section polygon and, per polygon edge, a label: 'blend' or 'outer'.

    Works for any vector dimension (2D for rims, 3D for straight edges).
    """
    cos_t = float(np.clip(d1 @ d2, -1.0, 1.0))
    theta = math.acos(cos_t)
    if kind == "chamfer":
        A, B = P + dist * d1, P + dist * d2
        blend = [A, B]
    else:
        L = dist / math.tan(theta / 2.0)
        A, B = P + L * d1, P + L * d2
        C = A - dist * n1
        omega = math.acos(float(np.clip(n1 @ n2, -1.0, 1.0)))
        k = max(2, math.ceil(segments * omega / (2 * math.pi)))
        s = np.arange(k + 1) / k
        dirs = (np.sin((1 - s) * omega)[:, None] * n1 + np.sin(s * omega)[:, None] * n2) / math.sin(omega)
        blend = list(C + dist * dirs)
        blend[0], blend[-1] = A, B
    pts = [A + reach * n1] + blend + [B + reach * n2, P + reach * (n1 + n2)]
    labels = ["outer"] + ["blend"] * (len(blend) - 1) + ["outer", "outer", "outer"]
    return np.array(pts), labels


def _adjacent_centroid(solid: Solid, face, a: int, b: int) -> np.ndarray:
    tris = solid.triangles[face.triangles]
    has = ((tris == a).any(axis=1)) & ((tris == b).any(axis=1))
    if not has.any():
        has = (tris == a).any(axis=1)
    return solid.vertices[tris[np.flatnonzero(has)[0]]].mean(axis=0)


def _too_large(kind: str):
    return ChamferTooLarge if kind == "chamfer" else FilletTooLarge


def _sweep_cutter(section: np.ndarray, labels, start, end, surfaces_for, alloc: TagAllocator):
    """Extrude the 3D section polygon (lying in a plane through ``start``) to ``end``."""
    t = end - start
    k = len(section)
    e1, e2 = basis_for(unit(t))
    flat = np.column_stack([(section - start) @ e1, (section - start) @ e2])
    area = 0.5 * float(np.dot(flat[:, 0], np.roll(flat[:, 1], -1)) - np.dot(np.roll(flat[:, 0], -1), flat[:, 1]))
    if area < 0:
        section, flat, labels = section[::-1], flat[::-1], _reverse_labels(labels)
    verts = np.vstack([section, section + t])
    cap = np.asarray(manifold3d.triangulate([flat]), dtype=np.int64).reshape(-1, 3)
    i = np.arange(k)
    j = (i + 1) % k
    # section CCW about +t: the start cap faces -t, the end cap +t, and the
    # outward normal of side i is (p[i+1] - p[i]) x t
    tris = [cap[:, ::-1], cap + k, np.column_stack([i, j, j + k]), np.column_stack([i, j + k, i + k])]
    tag_start, tag_end = alloc(), alloc()
    surfaces = {tag_start: Plane(start, -t), tag_end: Plane(end, t)}
    seg_tags = surfaces_for(verts[:k], labels, surfaces)
    tags = [np.full(len(cap), tag_start), np.full(len(cap), tag_end), seg_tags, seg_tags]
    return manifold_from_arrays(verts, np.vstack(tris), np.concatenate(tags)), surfaces


def _reverse_labels(labels):
    # labels[i] names polygon edge i -> i+1; after reversing the vertex order,
    # new edge i is old edge k-2-i
    k = len(labels)
    return [labels[(k - 2 - i) % k] for i in range(k)]


def _line_cutter(solid: Solid, edge: Edge, dist: float, kind: str, segments: int, alloc: TagAllocator):
    f1, f2 = (solid.faces[i] for i in edge.faces)
    if not (isinstance(f1.surface, Plane) and isinstance(f2.surface, Plane)):
        raise UnsupportedEdge(f"{edge.stable_id}: straight edge between non-planar faces")
    P0, P1 = edge.curve.start, edge.curve.end
    t = unit(P1 - P0)
    n1 = f1.sense * f1.surface.normal
    n2 = f2.sense * f2.surface.normal
    d1 = unit(np.cross(t, n1))
    d2 = unit(np.cross(t, n2))
    a, b = int(edge.chain[0]), int(edge.chain[1])
    if d1 @ (_adjacent_centroid(solid, f1, a, b) - P0) < 0:
        d1 = -d1
    if d2 @ (_adjacent_centroid(solid, f2, a, b) - P0) < 0:
        d2 = -d2
    conv = float(d1 @ n2)
    if abs(conv) <= ANGLE_TOL:
        raise UnsupportedEdge(f"{edge.stable_id}: faces are tangent or coplanar")
    if conv > 0:
        raise UnsupportedEdge(f"{edge.stable_id}: concave edge")
    theta = math.acos(float(np.clip(d1 @ d2, -1.0, 1.0)))
    reach_in = dist if kind == "chamfer" else dist / math.tan(theta / 2.0)
    length = float(np.linalg.norm(P1 - P0))
    probe = np.array([0.02, 0.5, 0.98])[:, None] * (P1 - P0) + P0
    margin = reach_in * (1 + 1e-6)
    if not (face_contains(solid, f1, probe + margin * d1).all() and face_contains(solid, f2, probe + margin * d2).all()):
        raise _too_large(kind)(f"{edge.stable_id}: {kind} of {dist:g} does not fit the adjacent faces")
    reach = max(dist, reach_in)
    # extend past free ends so the cut is clean; stop flush where material continues
    ext = 2.0 * reach
    inward = 0.25 * reach_in * (d1 + d2)
    ends = []
    for p, sgn in ((P0, -1.0), (P1, 1.0)):
        beyond = p + sgn * min(0.5 * reach, 0.25 * length) * t + inward
        ends.append(0.0 if solid.contains(beyond)[0] else ext)
    if not axis_aligned_model(solid):
        # a flush end cap would lie on the continuing face only up to rounding
        back = COPLANAR_SHIFT * 1e3 * solid.tolerance
        ends = [e if e > 0 else -back for e in ends]
    start = P0 - ends[0] * t
    end = P1 + ends[1] * t
    section, labels = _section(start, d1, d2, n1, n2, dist, kind, reach, segments)

    def surfaces_for(ring, labels, surfaces):
        k = len(ring)
        out = np.empty(k, dtype=np.int64)
        blend_tag = None
        for i in range(k):
            if labels[i] == "blend":
                if blend_tag is None:
                    blend_tag = alloc()
                    if kind == "chamfer":
                        surfaces[blend_tag] = Plane(ring[i], np.cross(ring[(i + 1) % k] - ring[i], t))
                    else:
                        L = dist / math.tan(theta / 2.0)
                        surfaces[blend_tag] = Cylinder(start + L * d1 - dist * n1, t, dist)
                out[i] = blend_tag
            else:
                tag = alloc()
                surfaces[tag] = Plane(ring[i], np.cross(ring[(i + 1) % k] - ring[i], t))
                out[i] = tag
        return out

    return _sweep_cutter(section, labels, start, end, surfaces_for, alloc)


def _rim_cutter(solid: Solid, edge: Edge, dist: float, kind: str, segments: int, alloc: TagAllocator):
    fa, fb = (solid.faces[i] for i in edge.faces)
    if isinstance(fa.surface, Plane) and isinstance(fb.surface, Cylinder):
        fp, fc = fa, fb
    elif isinstance(fb.surface, Plane) and isinstance(fa.surface, Cylinder):
        fp, fc = fb, fa
    else:
        raise UnsupportedEdge(f"{edge.stable_id}: circular edge is not a plane/cylinder rim")
    cyl = fc.surface
    a = fp.sense * fp.surface.normal
    tol = solid.tolerance
    if abs(abs(float(a @ cyl.axis_dir)) - 1.0) > ANGLE_TOL:
        raise UnsupportedEdge(f"{edge.stable_id}: cylinder axis is not normal to the cap")
    O = edge.curve.center
    off = O - cyl.axis_point
    if np.linalg.norm(off - (off @ cyl.axis_dir) * cyl.axis_dir) > 1e3 * tol:
        raise UnsupportedEdge(f"{edge.stable_id}: rim is not centred on the cylinder axis")
    O = O - ((O - fp.surface.point) @ a) * a
    R = cyl.radius
    s_rho = float(fc.sense)
    wall_z = (solid.vertices[solid.triangles[fc.triangles]].mean(axis=1) - O) @ a
    if np.median(wall_z) >= 0:
        raise UnsupportedEdge(f"{edge.stable_id}: concave rim")
    P = np.array([R, 0.0])
    n1, n2 = np.array([0.0, 1.0]), np.array([s_rho, 0.0])
    d1, d2 = np.array([-s_rho, 0.0]), np.array([0.0, -1.0])
    reach_in = dist  # 90 degree rims: the fillet tangent distance equals the radius
    e1, e2 = basis_for(a)
    ang = 2 * math.pi * (np.arange(8) + 0.5) / 8
    radial = np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2
    margin = reach_in * (1 + 1e-6)
    on_plane = O + (R - s_rho * margin) * radial
    on_wall = O + R * radial - margin * a
    if R - s_rho * margin <= 0 or not (face_contains(solid, fp, on_plane).all() and face_contains(solid, fc, on_wall).all()):
        raise _too_large(kind)(f"{edge.stable_id}: {kind} of {dist:g} does not fit the adjacent faces")
    reach = dist if s_rho > 0 else min(dist, 0.5 * R)
    section, labels = _section(P, d1, d2, n1, n2, dist, kind, reach, segments)
    # angles of the rim's own vertices keep the cutter aligned with the wall facets
    rim = solid.vertices[edge.chain] - O
    theta = np.sort(np.mod(np.arctan2(rim @ e2, rim @ e1), 2 * math.pi))
    k, J = len(section), len(theta)
    ring = np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2
    verts = (O + section[None, :, 1:2] * a + section[None, :, 0:1] * ring[:, None, :]).reshape(-1, 3)
    jj, ii = np.meshgrid(np.arange(J), np.arange(k), indexing="ij")
    jn, inx = (jj + 1) % J, (ii + 1) % k
    v00, v01 = jj * k + ii, jj * k + inx
    v10, v11 = jn * k + ii, jn * k + inx
    tris = np.concatenate([np.stack([v00, v10, v11], -1).reshape(-1, 3), np.stack([v00, v11, v01], -1).reshape(-1, 3)])
    surfaces = {}
    seg_tag = np.empty(k, dtype=np.int64)
    blend_tag = None
    for i in range(k):
        p, q = section[i], section[(i + 1) % k]
        if labels[i] == "blend":
            if blend_tag is None:
                blend_tag = alloc()
                if kind == "chamfer":
                    surfaces[blend_tag] = _revolved(O, a, p, q)
                else:
                    C = P + dist * d1 - dist * n1
                    surfaces[blend_tag] = Torus(O + C[1] * a, a, C[0], dist)
            seg_tag[i] = blend_tag
        else:
            seg_tag[i] = alloc()
            surfaces[seg_tag[i]] = _revolved(O, a, p, q)
    tags = np.concatenate([np.broadcast_to(seg_tag, (J, k)).reshape(-1)] * 2)
    vol_sign = _signed_volume(verts, tris)
    if vol_sign < 0:
        tris = tris[:, ::-1]
    return manifold_from_arrays(verts, tris, tags), surfaces


def _signed_volume(verts, tris) -> float:
    c = verts[tris]
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def _revolved(O, a, p, q):
    """Surface swept by the (rho, z) segment p-q revolving about the axis (O, a)."""
    (r0, z0), (r1, z1) = p, q
    dr, dz = r1 - r0, z1 - z0
    if abs(dz) <= 1e-12 * max(1.0, abs(dr)):
        return Plane(O + z0 * a, a if dr < 0 else -a)
    if abs(dr) <= 1e-12 * max(1.0, abs(dz)):
        return Cylinder(O, a, r0)
    slope = dr / dz
    apex_z = z0 - r0 / slope
    axis = a if slope > 0 else -a
    return Cone(O + apex_z * a, axis, math.atan(abs(slope)))


def blend(solid: Solid, edges: list[Edge], dist: float, kind: str, alloc: TagAllocator, segments: int = 64) -> Solid:
    """Chamfer (``kind='chamfer'``) or fillet every edge in ``edges`` by ``dist``."""
    cutters, surfaces = [], {}
    for edge in edges:
        if isinstance(edge.curve, Line3):
            man, surf = _line_cutter(solid, edge, dist, kind, segments, alloc)
        elif isinstance(edge.curve, Circle3) or (isinstance(edge.curve, Arc3) and edge.closed):
            man, surf = _rim_cutter(solid, edge, dist, kind, segments, alloc)
        else:
            raise UnsupportedEdge(f"{edge.stable_id}: {edge.kind} edges cannot be blended")
        cutters.append(man)
        surfaces.update(surf)
    tool = cutters[0] if len(cutters) == 1 else manifold3d.Manifold.batch_boolean(cutters, manifold3d.OpType.Add)
    result = manifold3d.Manifold.batch_boolean([solid.to_manifold(), tool], manifold3d.OpType.Subtract)
    return finish(result, {**solid.surfaces, **surfaces})
