"""Candidate enumeration, equivalence classes, embeddings and pointer resolution."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NoCandidates, NonManifoldInput, NonManifoldResult, UnknownEntity
from .grammar import BASE_PLANES, PointerRef
from .kernel.frame import BASE_PLANE_SURFACES
from .kernel.sampling import sample_edge, sample_face
from .kernel.solid import Solid
from .kernel.surfaces import Arc3, Cone, Cylinder, Line3, Plane, Torus

EMBED_DIM = 128
HIDDEN = 256
DEFAULT_SEED = 42
TIE_EPS = 1e-12


def id_key(stable_id: str):
    """Natural sort key: digit runs compare numerically."""
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.findall(r"\d+|\D+", stable_id))


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EncoderWeights:
    face_conv: np.ndarray  # (3*3*8, 256)
    face_bias: np.ndarray
    face_proj: np.ndarray  # (256, 128)
    edge_conv: np.ndarray  # (3*12, 256)
    edge_bias: np.ndarray
    edge_proj: np.ndarray
    base_planes: dict


@lru_cache(maxsize=8)
def encoder_weights(seed: int = DEFAULT_SEED) -> EncoderWeights:
    rng = np.random.default_rng(seed)

    def dense(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)

    face_conv = dense(72, HIDDEN)
    face_bias = 0.1 * rng.standard_normal(HIDDEN)
    face_proj = dense(HIDDEN, EMBED_DIM)
    edge_conv = dense(36, HIDDEN)
    edge_bias = 0.1 * rng.standard_normal(HIDDEN)
    edge_proj = dense(HIDDEN, EMBED_DIM)
    base = rng.standard_normal((3, EMBED_DIM))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    return EncoderWeights(face_conv, face_bias, face_proj, edge_conv, edge_bias, edge_proj, dict(zip(BASE_PLANES, base)))


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _patches2d(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    p = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    cols = [p[i : i + h, j : j + w] for i in range(3) for j in range(3)]
    return np.concatenate(cols, axis=-1).reshape(h * w, 9 * c)


def _patches1d(x: np.ndarray) -> np.ndarray:
    n, c = x.shape
    p = np.pad(x, ((1, 1), (0, 0)))
    return np.concatenate([p[i : i + n] for i in range(3)], axis=-1)


def embed_candidate(item, seed: int = DEFAULT_SEED) -> np.ndarray:
    """128-d unit embedding of a face tensor (H×W×8), edge tensor (N×12) or base-plane name."""
    W = encoder_weights(seed)
    if isinstance(item, str):
        if item not in W.base_planes:
            raise UnknownEntity(f"unknown base plane {item!r}")
        return W.base_planes[item].copy()
    x = np.asarray(item, dtype=float)
    if x.ndim == 3 and x.shape[-1] == 8:
        h = np.maximum(_patches2d(x) @ W.face_conv + W.face_bias, 0.0)
        return _unit(h.mean(axis=0) @ W.face_proj)
    if x.ndim == 2 and x.shape[-1] == 12:
        h = np.maximum(_patches1d(x) @ W.edge_conv + W.edge_bias, 0.0)
        return _unit(h.mean(axis=0) @ W.edge_proj)
    raise ValueError(f"cannot embed an array of shape {x.shape}")


# ---------------------------------------------------------------------------
# candidate sets
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Candidate:
    stable_id: str
    kind: str  # face | edge | base_plane
    carrier: object  # analytic surface or curve
    embedding: np.ndarray

    @property
    def ref(self) -> PointerRef:
        return PointerRef(self.kind, self.stable_id)


@dataclass(eq=False)
class CandidateSet:
    faces: list[Candidate]  # base planes included
    edges: list[Candidate]
    face_classes: list[list[int]] = field(default_factory=list)
    edge_classes: list[list[int]] = field(default_factory=list)

    def pool(self, kind: str) -> list[Candidate]:
        return self.edges if kind == "edge" else self.faces

    def classes(self, kind: str) -> list[list[int]]:
        return self.edge_classes if kind == "edge" else self.face_classes

    def find(self, stable_id: str) -> tuple[str, int]:
        for kind in ("face", "edge"):
            for i, c in enumerate(self.pool(kind)):
                if c.stable_id == stable_id:
                    return kind, i
        raise UnknownEntity(f"{stable_id!r} is not a candidate")

    def class_of(self, stable_id: str) -> list[str]:
        kind, i = self.find(stable_id)
        pool = self.pool(kind)
        for cls in self.classes(kind):
            if i in cls:
                return [pool[j].stable_id for j in cls]
        raise UnknownEntity(stable_id)  # unreachable: classes partition the pool

    def matrix(self, kind: str) -> np.ndarray:
        pool = self.pool(kind)
        if not pool:
            return np.zeros((0, EMBED_DIM))
        return np.stack([c.embedding for c in pool])


def enumerate_candidates(solid: Solid, seed: int = DEFAULT_SEED, tol: float | None = None) -> CandidateSet:
    """Faces (plus the three base planes) and edges of ``solid``, sorted by stable id."""
    try:
        topo = solid.topology
    except NonManifoldResult as exc:
        raise NonManifoldInput(str(exc)) from exc
    faces = [Candidate(name, "base_plane", BASE_PLANE_SURFACES[name], embed_candidate(name, seed)) for name in BASE_PLANES]
    for f in topo.faces:
        faces.append(Candidate(f.stable_id, "face", f.surface, embed_candidate(sample_face(solid, f), seed)))
    edges = [Candidate(e.stable_id, "edge", e.curve, embed_candidate(sample_edge(e), seed)) for e in topo.edges]
    faces.sort(key=lambda c: id_key(c.stable_id))
    edges.sort(key=lambda c: id_key(c.stable_id))
    cs = CandidateSet(faces, edges)
    if tol is None:
        tol = solid.tolerance
    cs.face_classes, cs.edge_classes = equivalence_classes(cs, tol)
    return cs


# ---------------------------------------------------------------------------
# equivalence classes
# ---------------------------------------------------------------------------


def _parallel(a, b, tol) -> bool:
    return abs(abs(float(np.dot(a, b))) - 1.0) <= tol


def _point_line_distance(p, a, d) -> float:
    off = np.asarray(p) - a
    return float(np.linalg.norm(off - (off @ d) * d))


def same_carrier(a, b, tol: float, angle_tol: float = 1e-9) -> bool:
    """Do two surfaces or curves have the same (unoriented) carrier?"""
    if isinstance(a, Plane) and isinstance(b, Plane):
        return _parallel(a.normal, b.normal, angle_tol) and abs(float((b.point - a.point) @ a.normal)) <= tol
    if isinstance(a, Cylinder) and isinstance(b, Cylinder):
        return (
            _parallel(a.axis_dir, b.axis_dir, angle_tol)
            and _point_line_distance(b.axis_point, a.axis_point, a.axis_dir) <= tol
            and abs(a.radius - b.radius) <= tol
        )
    if isinstance(a, Cone) and isinstance(b, Cone):
        return (
            float(a.axis_dir @ b.axis_dir) >= 1 - angle_tol
            and np.linalg.norm(a.apex - b.apex) <= tol
            and abs(a.half_angle - b.half_angle) <= angle_tol
        )
    if isinstance(a, Torus) and isinstance(b, Torus):
        return (
            _parallel(a.axis_dir, b.axis_dir, angle_tol)
            and np.linalg.norm(a.center - b.center) <= tol
            and abs(a.major_r - b.major_r) <= tol
            and abs(a.minor_r - b.minor_r) <= tol
        )
    if isinstance(a, Line3) and isinstance(b, Line3):
        d = a.direction
        return (
            _parallel(d, b.direction, angle_tol)
            and _point_line_distance(b.start, a.start, d) <= tol
            and _point_line_distance(b.end, a.start, d) <= tol
        )
    if isinstance(a, Arc3) and isinstance(b, Arc3):
        return (
            _parallel(a.normal, b.normal, angle_tol)
            and np.linalg.norm(a.center - b.center) <= tol
            and abs(a.radius - b.radius) <= tol
        )
    return False


def _partition(items: list[Candidate], tol: float) -> list[list[int]]:
    parent = list(range(len(items)))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if root(i) != root(j) and same_carrier(items[i].carrier, items[j].carrier, tol):
                parent[root(j)] = root(i)
    groups: dict[int, list[int]] = {}
    for i in range(len(items)):
        groups.setdefault(root(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def equivalence_classes(cs: CandidateSet, tol: float) -> tuple[list[list[int]], list[list[int]]]:
    """Coplanar face groups and collinear (co-circular) edge groups, as index lists."""
    return _partition(cs.faces, tol), _partition(cs.edges, tol)


# ---------------------------------------------------------------------------
# resolution and ground truth
# ---------------------------------------------------------------------------


def similarities(query, cs: CandidateSet, kind: str) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    n = np.linalg.norm(q)
    E = cs.matrix(kind)
    return E @ (q / n) if n > 0 else np.zeros(len(E))


def resolve(query, cs: CandidateSet, kind: str) -> Candidate:
    """Candidate of ``kind`` with the highest cosine similarity; ties go to the lowest stable id."""
    pool = cs.pool(kind)
    if not pool:
        raise NoCandidates(f"no {kind} candidates")
    sims = similarities(query, cs, kind)
    best = sims.max()
    tied = [pool[i] for i in np.flatnonzero(sims >= best - TIE_EPS)]
    return min(tied, key=lambda c: id_key(c.stable_id))


@dataclass(frozen=True)
class PointerTruth:
    positives: tuple[str, ...]
    negatives: tuple[str, ...]


def ground_truth(target: str, cs: CandidateSet) -> PointerTruth:
    kind, _ = cs.find(target)
    pos = cs.class_of(target)
    neg = tuple(c.stable_id for c in cs.pool(kind) if c.stable_id not in pos)
    return PointerTruth(tuple(pos), neg)
