"""Geometry and topology metrics: CD, IR, FluxEE, DangEL, SIR, SegE and primitive F1."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, KernelError, PointerCADError
from .grammar import Arc, Chamfer, Circle, EPart, Program
from .kernel.solid import TriangleMesh, normalize_to_unit_box

SCALE = 1e3
PRIMITIVE_KINDS = ("line", "arc", "circle", "extrusion", "chamfer", "fillet")


def _as_mesh(m) -> TriangleMesh:
    return m if isinstance(m, TriangleMesh) else m.mesh


# ---------------------------------------------------------------------------
# Chamfer distance
# ---------------------------------------------------------------------------


def sample_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points distributed uniformly by area over the mesh surface."""
    areas = mesh.areas()
    total = areas.sum()
    if not total > 0:
        raise DegenerateGeometry("mesh has zero surface area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    c = mesh.corners[tri]
    return (1 - r1)[:, None] * c[:, 0] + (r1 * (1 - r2))[:, None] * c[:, 1] + (r1 * r2)[:, None] * c[:, 2]


def chamfer_from_points(P: np.ndarray, Q: np.ndarray) -> float:
    """Sum of the two directed mean squared nearest-neighbour distances, ×10³."""
    dpq, _ = cKDTree(Q).query(P)
    dqp, _ = cKDTree(P).query(Q)
    return float((np.mean(dpq**2) + np.mean(dqp**2)) * SCALE)


def chamfer_distance(a, b, n: int = 8192, seed: int = 0, normalize: bool = True) -> float:
    """Chamfer distance between two surfaces.

    Each mesh gets its own generator seeded with ``seed``, so identical meshes
    draw identical samples and score exactly zero.
    """
    A, B = _as_mesh(a), _as_mesh(b)
    if normalize:
        A, B = normalize_to_unit_box(A), normalize_to_unit_box(B)
    P = sample_surface(A, n, np.random.default_rng(seed))
    Q = sample_surface(B, n, np.random.default_rng(seed))
    return chamfer_from_points(P, Q)


# ---------------------------------------------------------------------------
# validity
# ---------------------------------------------------------------------------


@dataclass
class BuildOutcome:
    built: bool
    error: str | None = None
    mesh: TriangleMesh | None = None


def _edge_table(mesh: TriangleMesh):
    """Directed half-edges plus the undirected key of each."""
    t = mesh.triangles
    he = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(he, axis=1)
    return he, key


def is_two_manifold(mesh: TriangleMesh) -> bool:
    """Every edge borders exactly two triangles that traverse it in opposite directions."""
    if not len(mesh.triangles):
        return False
    he, key = _edge_table(mesh)
    _, counts = np.unique(key, axis=0, return_counts=True)
    if (counts != 2).any():
        return False
    _, directed = np.unique(he, axis=0, return_counts=True)
    return bool((directed == 1).all())


def is_valid_build(mesh: TriangleMesh, min_volume: float = 1e-12) -> bool:
    return len(mesh.triangles) > 0 and is_two_manifold(mesh) and abs(mesh.volume) > min_volume


def invalidity_ratio(results) -> float:
    """Share of test cases that did not yield a watertight, non-empty solid.

    ``results`` holds booleans or :class:`BuildOutcome` records; malformed
    sequences should be passed as failures.
    """
    flags = [r.built if isinstance(r, BuildOutcome) else bool(r) for r in results]
    if not flags:
        raise ValueError("invalidity ratio of an empty test set")
    return (len(flags) - sum(flags)) / len(flags)


def flux_enclosure_error(mesh, normalize: bool = True) -> float:
    m = _as_mesh(mesh)
    if normalize:
        m = normalize_to_unit_box(m)
    return float(np.linalg.norm(0.5 * m.cross().sum(axis=0)) * SCALE)


def dangling_edge_length(mesh, normalize: bool = True) -> float:
    m = _as_mesh(mesh)
    if normalize and len(m.triangles):
        m = normalize_to_unit_box(m)
    if not len(m.triangles):
        return 0.0
    _, key = _edge_table(m)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    lone = uniq[counts == 1]
    return float(np.linalg.norm(m.vertices[lone[:, 0]] - m.vertices[lone[:, 1]], axis=1).sum() * SCALE)


# ---------------------------------------------------------------------------
# exact triangle-triangle intersection
# ---------------------------------------------------------------------------

_EPS = np.finfo(float).eps


def _orient3d_exact(a, b, c, d) -> int:
    a, b, c, d = ([Fraction(x) for x in p] for p in (a, b, c, d))
    ad = [a[i] - d[i] for i in range(3)]
    bd = [b[i] - d[i] for i in range(3)]
    cd = [c[i] - d[i] for i in range(3)]
    det = (
        ad[0] * (bd[1] * cd[2] - bd[2] * cd[1])
        - ad[1] * (bd[0] * cd[2] - bd[2] * cd[0])
        + ad[2] * (bd[0] * cd[1] - bd[1] * cd[0])
    )
    return (det > 0) - (det < 0)


def orient3d(a, b, c, d) -> int:
    """Sign of det[a-d, b-d, c-d], exact (float filter with rational fallback)."""
    ad0, ad1, ad2 = a[0] - d[0], a[1] - d[1], a[2] - d[2]
    bd0, bd1, bd2 = b[0] - d[0], b[1] - d[1], b[2] - d[2]
    cd0, cd1, cd2 = c[0] - d[0], c[1] - d[1], c[2] - d[2]
    m0 = bd1 * cd2 - bd2 * cd1
    m1 = bd0 * cd2 - bd2 * cd0
    m2 = bd0 * cd1 - bd1 * cd0
    det = ad0 * m0 - ad1 * m1 + ad2 * m2
    perm = (
        abs(ad0) * (abs(bd1 * cd2) + abs(bd2 * cd1))
        + abs(ad1) * (abs(bd0 * cd2) + abs(bd2 * cd0))
        + abs(ad2) * (abs(bd0 * cd1) + abs(bd1 * cd0))
    )
    # the subtractions forming ad, bd, cd may round too; 16 eps covers them
    if abs(det) > 16 * _EPS * perm:
        return 1 if det > 0 else -1
    return _orient3d_exact(a, b, c, d)


def orient2d(a, b, c) -> int:
    det = (a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0])
    perm = abs((a[0] - c[0]) * (b[1] - c[1])) + abs((a[1] - c[1]) * (b[0] - c[0]))
    if abs(det) > 8 * _EPS * perm:
        return 1 if det > 0 else -1
    a, b, c = ([Fraction(x) for x in p] for p in (a, b, c))
    det = (a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0])
    return (det > 0) - (det < 0)


def _on_segment_2d(p, a, b) -> bool:
    """p collinear with a-b is assumed; is it within the closed segment?"""
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_meet_2d(a, b, c, d) -> bool:
    o1, o2, o3, o4 = orient2d(a, b, c), orient2d(a, b, d), orient2d(c, d, a), orient2d(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return (
        (o1 == 0 and _on_segment_2d(c, a, b))
        or (o2 == 0 and _on_segment_2d(d, a, b))
        or (o3 == 0 and _on_segment_2d(a, c, d))
        or (o4 == 0 and _on_segment_2d(b, c, d))
    )


def _in_triangle_2d(p, t) -> bool:
    s = [orient2d(t[i], t[(i + 1) % 3], p) for i in range(3)]
    return all(x >= 0 for x in s) or all(x <= 0 for x in s)


def _drop_axis(tri) -> int:
    n = np.cross(np.subtract(tri[1], tri[0]), np.subtract(tri[2], tri[0]))
    return int(np.argmax(np.abs(n)))


def _project(points, axis):
    keep = [i for i in range(3) if i != axis]
    return [(p[keep[0]], p[keep[1]]) for p in points]


def _coplanar_segment_triangle(a, b, tri) -> bool:
    ax = _drop_axis(tri)
    (pa, pb), t = _project([a, b], ax), _project(tri, ax)
    if _in_triangle_2d(pa, t) or _in_triangle_2d(pb, t):
        return True
    return any(_segments_meet_2d(pa, pb, t[i], t[(i + 1) % 3]) for i in range(3))


def _segment_triangle(a, b, tri) -> bool:
    p, q, r = tri
    sa, sb = orient3d(p, q, r, a), orient3d(p, q, r, b)
    if sa == sb == 0:
        return _coplanar_segment_triangle(a, b, tri)
    if sa * sb > 0:
        return False
    s = [orient3d(a, b, p, q), orient3d(a, b, q, r), orient3d(a, b, r, p)]
    return all(x >= 0 for x in s) or all(x <= 0 for x in s)


def triangles_intersect(t1, t2) -> bool:
    """Exact closed triangle-triangle intersection test.

    Two non-coplanar triangles meet iff an edge of one meets the other; the
    coplanar case reduces to edge crossings and containment in 2D.
    """
    t1 = [tuple(map(float, p)) for p in t1]
    t2 = [tuple(map(float, p)) for p in t2]
    s2 = [orient3d(*t1, x) for x in t2]
    if all(s > 0 for s in s2) or all(s < 0 for s in s2):
        return False
    s1 = [orient3d(*t2, x) for x in t1]
    if all(s > 0 for s in s1) or all(s < 0 for s in s1):
        return False
    if all(s == 0 for s in s2):
        ax = _drop_axis(t1)
        a, b = _project(t1, ax), _project(t2, ax)
        if any(_segments_meet_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]) for i in range(3) for j in range(3)):
            return True
        return _in_triangle_2d(a[0], b) or _in_triangle_2d(b[0], a)
    edges = ((0, 1), (1, 2), (2, 0))
    return any(_segment_triangle(t1[i], t1[j], t2) for i, j in edges) or any(
        _segment_triangle(t2[i], t2[j], t1) for i, j in edges
    )


def _candidate_pairs(corners: np.ndarray, chunk: int = 2048):
    """Triangle pairs (i < j) with overlapping bounding boxes."""
    lo, hi = corners.min(axis=1), corners.max(axis=1)
    pad = 1e-12 * max(1.0, float(np.abs(corners).max()) if corners.size else 1.0)
    lo, hi = lo - pad, hi + pad
    n = len(corners)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        ov = np.all((lo[s:e, None] <= hi[None]) & (hi[s:e, None] >= lo[None]), axis=2)
        i, j = np.nonzero(ov)
        i = i + s
        keep = i < j
        yield from zip(i[keep].tolist(), j[keep].tolist())


def self_intersection_ratio(mesh) -> float:
    """Fraction of triangles that meet a triangle with which they share no vertex."""
    m = _as_mesh(mesh)
    n = len(m.triangles)
    if n == 0:
        return 0.0
    corners = m.corners
    tris = m.triangles
    hit = np.zeros(n, dtype=bool)
    for i, j in _candidate_pairs(corners):
        if hit[i] and hit[j]:
            continue
        if set(tris[i].tolist()) & set(tris[j].tolist()):
            continue
        if triangles_intersect(corners[i], corners[j]):
            hit[i] = hit[j] = True
    return float(hit.mean())


# ---------------------------------------------------------------------------
# segmentation error
# ---------------------------------------------------------------------------


def count_patches(mesh, dihedral_thresh: float = 30.0) -> int:
    """Regions grown across edges whose dihedral angle is below the threshold."""
    m = _as_mesh(mesh)
    n = len(m.triangles)
    if n == 0:
        return 0
    cr = m.cross()
    nrm = cr / np.maximum(np.linalg.norm(cr, axis=1, keepdims=True), 1e-300)
    _, key = _edge_table(m)
    owner = np.tile(np.arange(n), 3)
    order = np.lexsort((key[:, 1], key[:, 0]))
    k, o = key[order], owner[order]
    same_next = np.all(k[1:] == k[:-1], axis=1)
    # only edges shared by exactly two triangles connect regions
    starts = np.flatnonzero(np.concatenate([[True], ~same_next]))
    sizes = np.diff(np.concatenate([starts, [len(k)]]))
    pair = starts[sizes == 2]
    a, b = o[pair], o[pair + 1]
    cosang = np.clip(np.einsum("ij,ij->i", nrm[a], nrm[b]), -1.0, 1.0)
    link = cosang > math.cos(math.radians(dihedral_thresh))
    g = coo_matrix((np.ones(int(link.sum())), (a[link], b[link])), shape=(n, n))
    return int(connected_components(g, directed=False)[0])


def seg_error(a, b, dihedral_thresh: float = 30.0) -> int:
    return abs(count_patches(a, dihedral_thresh) - count_patches(b, dihedral_thresh))


# ---------------------------------------------------------------------------
# primitive F1
# ---------------------------------------------------------------------------


def _normalized(program: Program, p) -> np.ndarray:
    return (np.asarray(p, dtype=float) - np.asarray(program.origin)) / program.size


def extract_primitives(program: Program) -> dict[str, list[np.ndarray]]:
    """Parameter vectors of every primitive, in program-normalized world units.

    Steps that cannot be executed (and everything after them) contribute
    nothing.
    """
    from .kernel.execute import snapper, resolve_edge, run_step
    from .kernel.solid import Solid

    out: dict[str, list[np.ndarray]] = {k: [] for k in PRIMITIVE_KINDS}
    solid = Solid.empty()
    L = program.size
    for k, step in enumerate(program.steps):
        frames: dict = {}
        try:
            after = run_step(solid, step, k, program, frames=frames)
        except (PointerCADError, ValueError):
            break
        if isinstance(step, EPart):
            snap = snapper(solid)
            for s, sketch in enumerate(step.sketches):
                frame = frames[(k, s)]

                def world(pt):
                    w = frame.to_world((pt.x, pt.y))
                    if pt.snap is not None:
                        w = snap(pt.snap, w, frame.origin, frame.w)
                    return _normalized(program, w)

                for prof in sketch.profiles:
                    for loop in prof.loops:
                        curves = loop.curves
                        for c, curve in enumerate(curves):
                            if isinstance(curve, Circle):
                                out["circle"].append(np.concatenate([world(curve.center), [curve.radius * frame.scale / L]]))
                                continue
                            a, b = world(curve.start), world(curves[(c + 1) % len(curves)].start)
                            if isinstance(curve, Arc):
                                sign = 1.0 if curve.orientation == "CCW" else -1.0
                                out["arc"].append(np.concatenate([a, b, [sign * curve.sweep / 360.0]]))
                            else:
                                lo, hi = sorted([tuple(a), tuple(b)])
                                out["line"].append(np.array(lo + hi))
                ex = step.extrude
                op = ("New", "Join", "Cut", "Intersect").index(ex.op)
                out["extrusion"].append(
                    np.concatenate([_normalized(program, frame.origin), frame.w, [ex.e_pos, ex.e_neg, op]])
                )
        else:
            kind = "chamfer" if isinstance(step, Chamfer) else "fillet"
            value = step.distance if isinstance(step, Chamfer) else step.radius
            mids = []
            for ref in step.edges:
                e = resolve_edge(solid, ref)
                mids.append(solid.vertices[e.chain].mean(axis=0))
            out[kind].append(np.concatenate([_normalized(program, np.mean(mids, axis=0)), [value]]))
        solid = after
    return out


def match_count(pred: list, gt: list, tol: float) -> int:
    """Largest number of one-to-one pairs within Chebyshev distance ``tol``."""
    if not pred or not gt:
        return 0
    cost = np.empty((len(pred), len(gt)))
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            cost[i, j] = 0.0 if len(p) == len(g) and np.max(np.abs(p - g)) <= tol else 1.0
    r, c = linear_sum_assignment(cost)
    return int((cost[r, c] == 0.0).sum())


def f1_from_counts(tp: int, n_pred: int, n_gt: int) -> float:
    if n_pred == 0 and n_gt == 0:
        return 1.0
    return 2.0 * tp / (n_pred + n_gt)


def primitive_f1(pred, gt, kind: str, tol: float = 1e-2) -> float:
    """F1 of one primitive type.  ``pred`` / ``gt`` are programs or extracted primitive dicts."""
    if kind not in PRIMITIVE_KINDS:
        raise ValueError(f"unknown primitive kind {kind!r}")
    P = (pred if isinstance(pred, dict) else extract_primitives(pred))[kind] if pred is not None else []
    G = (gt if isinstance(gt, dict) else extract_primitives(gt))[kind]
    return f1_from_counts(match_count(P, G, tol), len(P), len(G))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

ROW_FIELDS = ("name", "built", "cd", "seg_e", "flux_ee", "dang_el", "sir")


@dataclass
class ModelMetrics:
    name: str
    built: bool
    cd: float | None = None
    seg_e: int | None = None
    flux_ee: float | None = None
    dang_el: float | None = None
    sir: float | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    rows: list[ModelMetrics] = field(default_factory=list)
    f1: dict[str, float] = field(default_factory=dict)

    @property
    def ir(self) -> float:
        return invalidity_ratio([r.built for r in self.rows])

    def _cds(self):
        return [r.cd for r in self.rows if r.cd is not None]

    @property
    def cd_mean(self) -> float | None:
        c = self._cds()
        return float(np.mean(c)) if c else None

    @property
    def cd_median(self) -> float | None:
        c = self._cds()
        return float(np.median(c)) if c else None

    def aggregate(self) -> dict:
        agg = {"ir": self.ir, "cd_mean": self.cd_mean, "cd_median": self.cd_median}
        agg.update({f"f1_{k}": v for k, v in self.f1.items()})
        return agg

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS])
        for k, v in self.aggregate().items():
            w.writerow([f"#{k}", _fmt(v)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"models": [asdict(r) for r in self.rows], "aggregate": self.aggregate()}, indent=1)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def evaluate_model(name: str, pred_mesh, gt_mesh, n: int = 8192, seed: int = 0, seg_thresh: float = 30.0) -> ModelMetrics:
    """Per-model row; ``pred_mesh`` is None when the prediction failed to build."""
    if pred_mesh is None or not is_valid_build(pred_mesh):
        return ModelMetrics(name, False, error=None if pred_mesh is None else "invalid mesh")
    try:
        return ModelMetrics(
            name,
            True,
            cd=chamfer_distance(pred_mesh, gt_mesh, n, seed),
            seg_e=seg_error(pred_mesh, gt_mesh, seg_thresh),
            flux_ee=flux_enclosure_error(pred_mesh),
            dang_el=dangling_edge_length(pred_mesh),
            sir=self_intersection_ratio(pred_mesh),
        )
    except KernelError as exc:
        return ModelMetrics(name, False, error=type(exc).__name__)
