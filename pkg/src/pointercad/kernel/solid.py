"""Tagged triangle meshes and the B-rep topology derived from their tags.

Every triangle carries the integer tag of the analytic surface it was cut
from.  Faces are connected regions of equal tag, edges are maximal chains of
mesh edges separating the same two faces, and vertices are the chain ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import manifold3d
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import DegenerateGeometry, NonManifoldResult
from .surfaces import Arc3, Circle3, Line3, Polyline3, Surface, TWO_PI, unit


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))

    @property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.cross(), axis=1)

    @property
    def area(self) -> float:
        return float(self.areas().sum())

    @property
    def volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)] if len(self.triangles) else self.vertices
        if not len(used):
            raise DegenerateGeometry("empty mesh has no bounds")
        return used.min(axis=0), used.max(axis=0)


def normalize_to_unit_box(mesh: TriangleMesh) -> TriangleMesh:
    """Center ``mesh`` and scale it uniformly so its longest side spans 1."""
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if not extent > 0:
        raise DegenerateGeometry("mesh has zero extent")
    return TriangleMesh((mesh.vertices - 0.5 * (lo + hi)) / extent, mesh.triangles)


# ---------------------------------------------------------------------------
# topology records
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Face:
    stable_id: str
    tag: int
    surface: Surface
    triangles: np.ndarray
    area: float
    sense: int  # +1 when the surface normal points out of the solid
    loops: int

    @property
    def kind(self) -> str:
        return self.surface.kind


@dataclass(eq=False)
class Edge:
    stable_id: str
    faces: tuple[int, int]
    chain: np.ndarray  # ordered mesh vertex indices
    closed: bool
    curve: object

    @property
    def kind(self) -> str:
        return self.curve.kind


@dataclass(eq=False)
class Topology:
    faces: list[Face]
    edges: list[Edge]
    vertices: np.ndarray  # mesh indices of B-rep vertices
    tri_face: np.ndarray
    mesh_euler: int

    face_index: dict = field(default_factory=dict)
    edge_index: dict = field(default_factory=dict)

    def __post_init__(self):
        self.face_index = {f.stable_id: i for i, f in enumerate(self.faces)}
        self.edge_index = {e.stable_id: i for i, e in enumerate(self.edges)}

    @property
    def euler_counts(self) -> tuple[int, int, int, int]:
        """(V, E, F, R); closed edges contribute one vertex each."""
        V = len(self.vertices) + sum(e.closed for e in self.edges)
        R = sum(f.loops - 1 for f in self.faces)
        return V, len(self.edges), len(self.faces), R

    def adjacency(self) -> list[tuple[int, int, int]]:
        """Face-adjacency graph as (face_a, face_b, edge) triples."""
        return [(e.faces[0], e.faces[1], i) for i, e in enumerate(self.edges)]


def _components(n: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    g = coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    return connected_components(g, directed=False)[1]


def _key(point, ndigits=6) -> tuple:
    return tuple(round(float(c), ndigits) + 0.0 for c in point)


def fit_curve(points: np.ndarray, closed: bool, tol: float):
    """Classify an ordered chain of points as a line, arc, circle or polyline."""
    if not closed:
        a, b = points[0], points[-1]
        chord = b - a
        length = np.linalg.norm(chord)
        if length > 0:
            d = chord / length
            off = points - a
            dev = np.linalg.norm(off - np.outer(off @ d, d), axis=1)
            if dev.max() <= tol:
                return Line3(a.copy(), b.copy())
    if len(points) >= 3:
        c = points.mean(axis=0)
        _, s, vt = np.linalg.svd(points - c)
        normal = vt[2]
        if np.abs((points - c) @ normal).max() <= tol:
            e1, e2 = vt[0], vt[1]
            xy = np.column_stack([(points - c) @ e1, (points - c) @ e2])
            A = np.column_stack([2 * xy, np.ones(len(xy))])
            rhs = (xy**2).sum(axis=1)
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            cx, cy = sol[:2]
            r = math.sqrt(max(sol[2] + cx * cx + cy * cy, 0.0))
            if r > 0 and np.abs(np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) - r).max() <= tol:
                center = c + cx * e1 + cy * e2
                ang = np.unwrap(np.arctan2(xy[:, 1] - cy, xy[:, 0] - cx))
                if ang[-1] < ang[0]:
                    normal = -normal
                    ang = -ang
                ref = unit(points[0] - center)
                if closed:
                    return Circle3(center, normal, r, ref)
                sweep = float(ang[-1] - ang[0])
                if 0 < sweep < TWO_PI:
                    return Arc3(center, unit(normal), r, ref, sweep)
    pts = np.vstack([points, points[:1]]) if closed else points
    return Polyline3(pts.copy())


def derive_topology(vertices: np.ndarray, triangles: np.ndarray, tags: np.ndarray, surfaces: dict, tol: float) -> Topology:
    nv = len(vertices)
    m = len(triangles)
    he_from = triangles.reshape(-1)
    he_to = triangles[:, [1, 2, 0]].reshape(-1)
    he_tri = np.repeat(np.arange(m), 3)
    lo = np.minimum(he_from, he_to)
    hi = np.maximum(he_from, he_to)
    key = lo * nv + hi
    order = np.argsort(key, kind="stable")
    _, start, counts = np.unique(key[order], return_index=True, return_counts=True)
    if (counts != 2).any():
        bad = int((counts != 2).sum())
        raise NonManifoldResult(f"{bad} mesh edge(s) not shared by exactly two triangles")
    ha, hb = order[start], order[start + 1]
    if (he_from[ha] != he_to[hb]).any():
        raise NonManifoldResult("inconsistently oriented triangles")
    ta, tb = he_tri[ha], he_tri[hb]

    # faces: connected same-tag regions
    same = tags[ta] == tags[tb]
    comp = _components(m, ta[same], tb[same])
    cross = np.cross(*(vertices[triangles[:, i]] - vertices[triangles[:, 0]] for i in (1, 2)))
    tri_area = 0.5 * np.linalg.norm(cross, axis=1)
    centroids = vertices[triangles].mean(axis=1)
    groups: dict[int, np.ndarray] = {}
    comp_order = np.argsort(comp, kind="stable")
    bounds = np.flatnonzero(np.diff(comp[comp_order])) + 1
    for tris in np.split(comp_order, bounds):
        groups[int(comp[tris[0]])] = tris
    by_tag: dict[int, list] = {}
    for tris in groups.values():
        w = tri_area[tris]
        cen = (centroids[tris] * w[:, None]).sum(axis=0) / max(w.sum(), 1e-300)
        by_tag.setdefault(int(tags[tris[0]]), []).append((_key(cen), tris))
    faces: list[Face] = []
    tri_face = np.empty(m, dtype=np.int64)
    for tag in sorted(by_tag):
        parts = sorted(by_tag[tag], key=lambda p: p[0])
        for k, (cen, tris) in enumerate(parts):
            sid = f"F{tag}" if len(parts) == 1 else f"F{tag}.{k}"
            surface = surfaces[tag]
            tri_face[tris] = len(faces)
            c = centroids[tris]
            n_surf = _surface_normals(surface, c)
            sense = 1 if np.einsum("ij,ij->", n_surf, cross[tris]) >= 0 else -1
            faces.append(Face(sid, tag, surface, tris, float(tri_area[tris].sum()), sense, 0))

    # boundary mesh edges, directed along the lower-indexed face
    fa_all, fb_all = tri_face[ta], tri_face[tb]
    bnd = fa_all != fb_all
    fa = np.minimum(fa_all, fb_all)[bnd]
    fb = np.maximum(fa_all, fb_all)[bnd]
    use_a = (fa_all <= fb_all)[bnd]
    u = np.where(use_a, he_from[ha][bnd], he_from[hb][bnd])
    v = np.where(use_a, he_to[ha][bnd], he_to[hb][bnd])
    nb = len(u)

    # boundary loops per face (for Euler-Poincare)
    if nb:
        fv = np.concatenate([fa * nv + u, fa * nv + v, fb * nv + u, fb * nv + v])
        nodes, inv = np.unique(fv, return_inverse=True)
        k = nb
        lab = _components(len(nodes), np.concatenate([inv[:k], inv[2 * k : 3 * k]]), np.concatenate([inv[k : 2 * k], inv[3 * k :]]))
        node_face = nodes // nv
        loops = np.zeros(len(faces), dtype=np.int64)
        uniq_pairs = np.unique(np.column_stack([node_face, lab]), axis=0)
        np.add.at(loops, uniq_pairs[:, 0], 1)
        for i, f in enumerate(faces):
            f.loops = int(loops[i])

    # B-rep vertices and chains
    deg = np.bincount(np.concatenate([u, v]), minlength=nv) if nb else np.zeros(nv, dtype=np.int64)
    is_corner = (deg > 0) & (deg != 2)
    edges: list[Edge] = []
    if nb:
        inc_v = np.concatenate([u, v])
        inc_e = np.concatenate([np.arange(nb), np.arange(nb)])
        o = np.argsort(inc_v, kind="stable")
        inc_v, inc_e = inc_v[o], inc_e[o]
        # degree-2 non-corner vertices link their two incident edges
        first = np.flatnonzero(np.r_[True, inc_v[1:] != inc_v[:-1]])
        link = first[~is_corner[inc_v[first]]]
        chain_of = _components(nb, inc_e[link], inc_e[link + 1])
        corder = np.argsort(chain_of, kind="stable")
        cb = np.flatnonzero(np.diff(chain_of[corder])) + 1
        raw = []
        for members in np.split(corder, cb):
            nxt = {int(u[i]): int(i) for i in members}
            starts = [i for i in members if is_corner[u[i]]]
            closed = not starts
            if closed:
                cand = sorted(members, key=lambda i: _key(vertices[u[i]], 9))
                e0 = int(cand[0])
            else:
                e0 = int(starts[0])
            chain = [int(u[e0])]
            e = e0
            for _ in range(len(members)):
                chain.append(int(v[e]))
                if is_corner[v[e]] or int(v[e]) == chain[0]:
                    break
                e = nxt[int(v[e])]
            if closed:
                chain = chain[:-1]
            pts = vertices[chain]
            mid = _key(pts.mean(axis=0))
            raw.append((int(fa[e0]), int(fb[e0]), mid, np.asarray(chain, dtype=np.int64), closed))
        raw.sort(key=lambda r: (r[0], r[1], r[2]))
        pair_counts: dict = {}
        for r in raw:
            pair_counts[(r[0], r[1])] = pair_counts.get((r[0], r[1]), 0) + 1
        seen: dict = {}
        for a, b, _, chain, closed in raw:
            base = f"{faces[a].stable_id}~{faces[b].stable_id}"
            k = seen.get((a, b), 0)
            seen[(a, b)] = k + 1
            sid = base if pair_counts[(a, b)] == 1 else f"{base}#{k}"
            curve = fit_curve(vertices[chain], closed, tol)
            edges.append(Edge(sid, (a, b), chain, closed, curve))

    used = np.unique(triangles)
    mesh_euler = len(used) - len(ha) + m
    return Topology(faces, edges, np.flatnonzero(is_corner), tri_face, int(mesh_euler))


def _surface_normals(surface, points):
    uv = surface.param(points)
    return surface.normal_at(uv[:, 0], uv[:, 1])


# ---------------------------------------------------------------------------
# solids
# ---------------------------------------------------------------------------


class Solid:
    """Closed tagged triangle mesh plus the analytic surface of every tag."""

    def __init__(self, vertices, triangles, tags, surfaces: dict, manifold=None):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        self.tags = np.asarray(tags, dtype=np.int64).reshape(-1)
        if len(self.tags) != len(self.triangles):
            raise ValueError("one tag per triangle is required")
        present = set(np.unique(self.tags).tolist())
        missing = present - set(surfaces)
        if missing:
            raise ValueError(f"tags without surfaces: {sorted(missing)}")
        self.surfaces = {t: surfaces[t] for t in sorted(present)}
        self._manifold = manifold
        for arr in (self.vertices, self.triangles, self.tags):
            arr.setflags(write=False)

    @classmethod
    def empty(cls) -> "Solid":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64), {})

    @classmethod
    def from_manifold(cls, man: manifold3d.Manifold, surfaces: dict) -> "Solid":
        mesh = man.to_mesh64()
        verts = np.array(mesh.vert_properties, dtype=float)[:, :3]
        tris = np.array(mesh.tri_verts, dtype=np.int64)
        tags = np.array(mesh.face_id, dtype=np.int64)
        return cls(verts, tris, tags, surfaces, manifold=man)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    @property
    def mesh(self) -> TriangleMesh:
        return TriangleMesh(self.vertices, self.triangles)

    @property
    def volume(self) -> float:
        return self.mesh.volume if not self.is_empty else 0.0

    @property
    def tolerance(self) -> float:
        if self.is_empty:
            return 1e-9
        lo, hi = self.mesh.bounds()
        return 1e-6 * float(np.linalg.norm(hi - lo))

    def to_manifold(self) -> manifold3d.Manifold:
        if self._manifold is None:
            if self.is_empty:
                self._manifold = manifold3d.Manifold()
            else:
                mesh = manifold3d.Mesh64(
                    vert_properties=np.array(self.vertices, dtype=np.float64),
                    tri_verts=np.array(self.triangles, dtype=np.uint64),
                    face_id=np.array(self.tags, dtype=np.uint64),
                )
                man = manifold3d.Manifold(mesh)
                if man.status() != manifold3d.Error.NoError:
                    raise NonManifoldResult(f"mesh rejected: {man.status()}")
                self._manifold = man
        return self._manifold

    @cached_property
    def topology(self) -> Topology:
        if self.is_empty:
            return Topology([], [], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), 0)
        return derive_topology(self.vertices, self.triangles, self.tags, self.surfaces, self.tolerance)

    @property
    def faces(self) -> list[Face]:
        return self.topology.faces

    @property
    def edges(self) -> list[Edge]:
        return self.topology.edges

    def face(self, stable_id: str) -> Face | None:
        i = self.topology.face_index.get(stable_id)
        return None if i is None else self.topology.faces[i]

    def edge(self, stable_id: str) -> Edge | None:
        i = self.topology.edge_index.get(stable_id)
        return None if i is None else self.topology.edges[i]

    def face_mesh(self, face: Face) -> TriangleMesh:
        return TriangleMesh(self.vertices, self.triangles[face.triangles])

    def outward_normal(self, face: Face, points) -> np.ndarray:
        return face.sense * _surface_normals(face.surface, np.atleast_2d(points))

    def contains(self, points) -> np.ndarray:
        """Generalized winding number test (True strictly inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_empty:
            return np.zeros(len(pts), dtype=bool)
        corners = self.vertices[self.triangles]
        out = np.empty(len(pts), dtype=bool)
        for i, p in enumerate(pts):
            a, b, c = (corners[:, k] - p for k in range(3))
            la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
            det = np.einsum("ij,ij->i", a, np.cross(b, c))
            den = la * lb * lc + np.einsum("ij,ij->i", a, b) * lc + np.einsum("ij,ij->i", b, c) * la + np.einsum("ij,ij->i", c, a) * lb
            w = np.arctan2(det, den).sum() / (2 * math.pi)
            out[i] = w > 0.5
        return out
