"""Seeded generator of multi-step programs, and token-deletion fault injection.

Programs live in the world box [-1, 1]^3 (origin (-1,-1,-1), size 2).  Later
steps sketch on faces of the current solid, place their frame origin on a
solid corner through a snapped hint, and snap profile corners onto existing
edges wherever the profile shares them.  That is the situation where pointers
remove quantization error.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec import decode, encode, save_stream
from .errors import PointerCADError
from .grammar import (
    Chamfer,
    Circle,
    EPart,
    Extrude,
    Fillet,
    FrameSpec,
    Line,
    Loop,
    Point2,
    PointerRef,
    Profile,
    Program,
    Sketch,
    TokenStream,
    validate,
)
from .kernel.execute import run_step
from .kernel.frame import build_frame
from .kernel.meshio import write_stl
from .kernel.solid import Solid
from .kernel.surfaces import Line3, Plane
from .metrics import is_valid_build

WORLD_ORIGIN = (-1.0, -1.0, -1.0)
WORLD_SIZE = 2.0
_AXIS_NAMES = ("X", "Y", "Z")


@dataclass(frozen=True)
class CorpusSpec:
    n_models: int = 10
    max_steps: int = 4
    min_steps: int = 2
    # relative weights of the step kinds proposed after the first step
    mix: dict = field(default_factory=lambda: {"face_rect": 5.0, "face_circle": 2.0, "base_rect": 1.0})
    chamfer_prob: float = 0.15
    fillet_prob: float = 0.15
    seed: int = 0
    max_tries: int = 40


def study_spec(n_models: int = 200, seed: int = 0) -> CorpusSpec:
    """The standard quantization-study corpus: legacy-compatible, multi-step."""
    return CorpusSpec(n_models=n_models, min_steps=2, max_steps=4, chamfer_prob=0.0, fillet_prob=0.0, seed=seed)


def model_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------


def _norm(program_origin, size, world) -> np.ndarray:
    return (np.asarray(world) - np.asarray(program_origin)) / size


def _direction_for(normal) -> str:
    i = int(np.argmax(np.abs(normal)))
    return _AXIS_NAMES[i] + ("+" if normal[i] > 0 else "-")


def _hint(corner, direction: str) -> Point2:
    """Normalized hint coordinates of ``corner`` for a frame along ``direction``."""
    i = _AXIS_NAMES.index(direction[0])
    a, b = {0: (1, 2), 1: (2, 0), 2: (0, 1)}[i]
    p = _norm(WORLD_ORIGIN, WORLD_SIZE, corner)
    return float(p[a]), float(p[b])


@dataclass
class _FaceSite:
    """A planar face with the corners and edges that snapping can use."""

    stable_id: str
    plane: Plane
    outward: np.ndarray
    corners: list[tuple[np.ndarray, str]]  # (world point, id of the edge normal to the face there)
    edges: list[tuple[Line3, str]]  # straight boundary edges


def _face_sites(solid: Solid) -> list[_FaceSite]:
    topo = solid.topology
    sites = []
    for fi, face in enumerate(topo.faces):
        if not isinstance(face.surface, Plane):
            continue
        n = face.sense * face.surface.normal
        corners, edges = [], []
        for e in topo.edges:
            if not isinstance(e.curve, Line3):
                continue
            d = e.curve.direction
            if fi in e.faces:
                edges.append((e.curve, e.stable_id))
            elif abs(abs(float(d @ n)) - 1.0) < 1e-9:
                for p in (e.curve.start, e.curve.end):
                    if abs(float((p - face.surface.point) @ n)) < 1e-9:
                        corners.append((np.asarray(p), e.stable_id))
        # keep corners that actually bound this face
        verts = solid.vertices[np.unique(solid.triangles[face.triangles])]
        corners = [(p, r) for p, r in corners if np.min(np.linalg.norm(verts - p, axis=1)) < 1e-9]
        if corners:
            sites.append(_FaceSite(face.stable_id, face.surface, n, corners, edges))
    return sites


# ---------------------------------------------------------------------------
# step proposals
# ---------------------------------------------------------------------------


def _rect_profile(pts) -> Profile:
    return Profile((Loop(tuple(Line(p) for p in pts)),))


def _first_step(rng) -> EPart:
    x0, y0 = rng.uniform(0.2, 0.45, size=2)
    s = float(rng.uniform(0.35, 0.5))
    a, b = rng.uniform(0.45, 1.0, size=2)
    rot = float(rng.uniform(0, 90)) if rng.random() < 0.25 else 0.0
    if rng.random() < 0.2:
        r = float(rng.uniform(0.2, 0.5))
        prof = Profile((Loop((Circle(Point2(0.5, 0.5), r),)),))
    else:
        prof = _rect_profile([Point2(0.0, 0.0), Point2(float(a), 0.0), Point2(float(a), float(b)), Point2(0.0, float(b))])
    sketch = Sketch(PointerRef("base_plane", "Top"), FrameSpec("Z+", Point2(float(x0), float(y0)), rot, s), (prof,))
    return EPart((sketch,), Extrude(float(rng.uniform(0.1, 0.3)), 0.0, "New"))


def _local_extent(frame, site: _FaceSite, origin) -> tuple[float, float]:
    pts = np.array([p for p, _ in site.corners])
    off = (pts - origin) @ np.column_stack([frame.u, frame.v])
    return float(off[:, 0].max()), float(off[:, 1].max())


def _face_step(rng, solid: Solid, program_size: float, circle: bool) -> EPart | None:
    sites = _face_sites(solid)
    if not sites:
        return None
    # bias toward the most recently created faces
    tags = np.array([int(s.stable_id[1:].split(".")[0]) for s in sites])
    w = np.where(tags >= tags.max() - tags.max() % 1000, 3.0, 1.0)
    site = sites[int(rng.choice(len(sites), p=w / w.sum()))]
    direction = _direction_for(site.outward)
    probe = build_frame(site.plane, FrameSpec(direction, Point2(0.0, 0.0)), WORLD_ORIGIN, WORLD_SIZE)
    uv = np.column_stack([probe.u, probe.v])
    # frame origin at the corner with the smallest u + v
    corner, corner_ref = min(site.corners, key=lambda c: float(c[0] @ uv.sum(axis=1)))
    A, B = _local_extent(probe, site, corner)
    if A < 0.05 or B < 0.05:
        return None
    span = max(A, B) / program_size
    s = float(min(1.0, span / rng.uniform(0.8, 0.98)))
    unit_len = program_size * s  # world length of one sketch unit
    hx, hy = _hint(corner, direction)
    frame = FrameSpec(direction, Point2(hx, hy, PointerRef("edge", corner_ref)), 0.0, s)

    def corner_at(x, y):
        target = corner + x * probe.u + y * probe.v
        for p, ref in site.corners:
            if np.linalg.norm(p - target) < 1e-9:
                return ref
        return None

    def edge_through(target):
        for curve, ref in site.edges:
            d = curve.direction
            off = target - curve.start
            if np.linalg.norm(off - (off @ d) * d) < 1e-9:
                return ref
        return None

    def pt(x, y):
        """Sketch point at world offsets (x, y), snapped when it sits on the face boundary."""
        ref = corner_at(x, y)
        snap = PointerRef("edge", ref) if ref else None
        if snap is None:
            e = edge_through(corner + x * probe.u + y * probe.v)
            snap = PointerRef("edge", e) if e else None
        return Point2(float(x / unit_len), float(y / unit_len), snap)

    if circle:
        r = float(rng.uniform(0.2, 0.6) * min(A, B))
        prof = Profile((Loop((Circle(Point2(0.0, 0.0, PointerRef("edge", corner_ref)), r / unit_len),)),))
    else:
        a = A if rng.random() < 0.6 else float(rng.uniform(0.3, 0.9) * A)
        b = B if rng.random() < 0.6 else float(rng.uniform(0.3, 0.9) * B)
        prof = _rect_profile([Point2(0.0, 0.0), pt(a, 0.0), pt(a, b), pt(0.0, b)])
    sketch = Sketch(PointerRef("face", site.stable_id), frame, (prof,))
    depth = float(rng.uniform(0.05, 0.25))
    if rng.random() < 0.6:
        return EPart((sketch,), Extrude(depth, 0.0, "Join"))
    return EPart((sketch,), Extrude(0.0, depth, "Cut"))


def _base_step(rng) -> EPart:
    plane = str(rng.choice(["Top", "Front", "Right"]))
    direction = {"Top": "Z+", "Front": "Y+", "Right": "X+"}[plane]
    x0, y0 = rng.uniform(0.25, 0.5, size=2)
    s = float(rng.uniform(0.2, 0.4))
    a, b = rng.uniform(0.4, 1.0, size=2)
    prof = _rect_profile([Point2(0.0, 0.0), Point2(float(a), 0.0), Point2(float(a), float(b)), Point2(0.0, float(b))])
    sketch = Sketch(PointerRef("base_plane", plane), FrameSpec(direction, Point2(float(x0), float(y0)), 0.0, s), (prof,))
    return EPart((sketch,), Extrude(float(rng.uniform(0.05, 0.2)), float(rng.uniform(0.0, 0.15)), "Join"))


def _blend_step(rng, solid: Solid, kind: str):
    lines = [e for e in solid.edges if isinstance(e.curve, Line3)]
    if not lines:
        return None
    k = int(rng.integers(1, min(3, len(lines)) + 1))
    chosen = sorted(rng.choice(len(lines), size=k, replace=False).tolist())
    refs = tuple(PointerRef("edge", lines[i].stable_id) for i in chosen)
    shortest = min(float(np.linalg.norm(lines[i].curve.end - lines[i].curve.start)) for i in chosen)
    d = float(rng.uniform(0.05, 0.2) * shortest / WORLD_SIZE)
    return Chamfer(d, refs) if kind == "chamfer" else Fillet(d, refs)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _try_step(solid, step, k, program) -> Solid | None:
    try:
        out = run_step(solid, step, k, program)
        out.topology  # must have a consistent B-rep
    except PointerCADError:
        return None
    return out if is_valid_build(out.mesh) else None


def generate_program(spec: CorpusSpec, rng: np.random.Generator) -> tuple[Program, Solid]:
    """One program that validates and builds; proposals are retried until they do."""
    kinds = list(spec.mix)
    weights = np.array([spec.mix[k] for k in kinds], dtype=float)
    weights /= weights.sum()
    for _ in range(spec.max_tries):
        n_steps = int(rng.integers(spec.min_steps, spec.max_steps + 1))
        steps: list = []
        solid = Solid.empty()
        stuck = False
        while len(steps) < n_steps and not stuck:
            k = len(steps)
            for _attempt in range(spec.max_tries):
                if k == 0:
                    step = _first_step(rng)
                else:
                    roll = rng.random()
                    if roll < spec.chamfer_prob:
                        step = _blend_step(rng, solid, "chamfer")
                    elif roll < spec.chamfer_prob + spec.fillet_prob:
                        step = _blend_step(rng, solid, "fillet")
                    else:
                        kind = kinds[int(rng.choice(len(kinds), p=weights))]
                        if kind == "base_rect":
                            step = _base_step(rng)
                        else:
                            step = _face_step(rng, solid, WORLD_SIZE, kind == "face_circle")
                if step is None:
                    continue
                program = Program(tuple(steps) + (step,), WORLD_ORIGIN, WORLD_SIZE)
                if validate(program):
                    continue
                out = _try_step(solid, step, k, program)
                if out is not None:
                    steps.append(step)
                    solid = out
                    break
            else:
                stuck = True
        if not stuck:
            return Program(tuple(steps), WORLD_ORIGIN, WORLD_SIZE), solid
    raise RuntimeError("corpus generator could not build a program")


def generate_corpus(spec: CorpusSpec) -> list[tuple[str, int, Program, Solid]]:
    out = []
    for i in range(spec.n_models):
        seed = model_seed(spec.seed, i)
        program, solid = generate_program(spec, np.random.default_rng(seed))
        out.append((f"model_{i:04d}", seed, program, solid))
    return out


def write_corpus(spec: CorpusSpec, out_dir, q: int = 8) -> dict:
    """Write ``<name>.json`` token streams, ``<name>.stl`` meshes and ``manifest.json``."""
    from .tokens import QuantConfig
    from .grammar import program_to_dict

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, seed, program, solid in generate_corpus(spec):
        save_stream(encode(program, QuantConfig(q)), out / f"{name}.json")
        (out / f"{name}.program.json").write_text(json.dumps(program_to_dict(program)))
        write_stl(solid.mesh, out / f"{name}.stl")
        entries.append({"name": name, "seed": seed, "steps": len(program.steps)})
    spec_doc = asdict(spec)
    manifest = {"spec": spec_doc, "q": q, "models": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


# ---------------------------------------------------------------------------
# fault injection
# ---------------------------------------------------------------------------


def delete_token(stream: TokenStream, pos: int) -> TokenStream:
    """Drop the token at ``pos``; pointer payloads after it shift left."""
    ptrs = {}
    for p, ref in stream.pointers.items():
        if p < pos:
            ptrs[p] = ref
        elif p > pos:
            ptrs[p - 1] = ref
    toks = stream.tokens[:pos] + stream.tokens[pos + 1 :]
    return TokenStream(toks, ptrs, stream.q, stream.origin, stream.size)


def is_malformed(stream: TokenStream) -> bool:
    try:
        return bool(validate(decode(stream)))
    except PointerCADError:
        return True


def corrupt(stream: TokenStream, rng: np.random.Generator, max_deletions: int = 64) -> TokenStream:
    """Delete random tokens until the stream no longer parses or validates."""
    for _ in range(max_deletions):
        if not stream.tokens:
            break
        stream = delete_token(stream, int(rng.integers(len(stream.tokens))))
        if is_malformed(stream):
            return stream
    return stream


def inject_faults(streams: list[TokenStream], rate: float, seed: int = 0) -> tuple[list[TokenStream], list[int]]:
    """Corrupt ``round(rate * n)`` randomly chosen streams; returns the new list and the corrupted indices."""
    rng = np.random.default_rng(seed)
    n_bad = int(round(rate * len(streams)))
    bad = sorted(rng.choice(len(streams), size=n_bad, replace=False).tolist())
    out = list(streams)
    for i in bad:
        out[i] = corrupt(out[i], rng)
    return out, bad
