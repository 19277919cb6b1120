"""Quantization-error study: pointer codec versus the legacy absolute codec."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .codec import decode, decode_legacy, encode, encode_legacy
from .errors import PointerCADError
from .grammar import Circle, EPart, Point2, Program
from .kernel.execute import snapper, execute_program, run_step
from .kernel.solid import Solid, TriangleMesh, normalize_to_unit_box
from .metrics import chamfer_distance, chamfer_from_points, is_valid_build, sample_surface
from .tokens import QuantConfig

CODECS = ("pointer", "legacy")


@dataclass(frozen=True)
class QuantStudyConfig:
    q_values: tuple[int, ...] = (4, 5, 6, 7, 8, 9, 10)
    codecs: tuple[str, ...] = CODECS
    n_samples: int = 8192
    seed: int = 0
    segments: int = 64


@dataclass
class StudyRow:
    model: str
    codec: str
    q: int
    built: bool
    cd: float | None
    error: str | None = None


@dataclass
class StudyResult:
    rows: list[StudyRow] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)
    noise: float = 0.0

    def cell(self, codec: str, q: int) -> list[StudyRow]:
        return [r for r in self.rows if r.codec == codec and r.q == q]

    def median(self, codec: str, q: int) -> float:
        cds = [r.cd for r in self.cell(codec, q) if r.built]
        return float(np.median(cds)) if cds else float("nan")

    def ir(self, codec: str, q: int) -> float:
        cell = self.cell(codec, q)
        return sum(not r.built for r in cell) / len(cell) if cell else float("nan")

    def table(self) -> list[dict]:
        qs = sorted({r.q for r in self.rows})
        codecs = [c for c in CODECS if any(r.codec == c for r in self.rows)]
        return [
            {"codec": c, "q": q, "n": len(self.cell(c, q)), "ir": self.ir(c, q), "median_cd": self.median(c, q)}
            for c in codecs
            for q in qs
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["codec", "q", "n", "ir", "median_cd"])
        for row in self.table():
            w.writerow([row["codec"], row["q"], row["n"], f"{row['ir']:.6g}", f"{row['median_cd']:.6g}"])
        w.writerow(["#noise", f"{self.noise:.6g}"])
        w.writerow(["#excluded", len(self.excluded)])
        return buf.getvalue()


def legacy_compatible(program: Program) -> bool:
    return all(isinstance(s, EPart) for s in program.steps)


def resolve_snaps(program: Program) -> tuple[Program, dict]:
    """Replace every snapped sketch point by the plain coordinates it snaps to.

    Returns the snap-free program and the sketch frames of the original.
    Frame-origin snaps stay in place: the legacy codec reads frames directly.
    """
    solid = Solid.empty()
    frames: dict = {}
    steps = []
    for k, step in enumerate(program.steps):
        after = run_step(solid, step, k, program, frames=frames)
        if isinstance(step, EPart):
            snap = snapper(solid)
            sketches = []
            for s, sketch in enumerate(step.sketches):
                frame = frames[(k, s)]

                def plain(p: Point2) -> Point2:
                    if p.snap is None:
                        return p
                    world = snap(p.snap, frame.in_plane(frame.scale * np.array([p.x, p.y])), frame.origin, frame.w)
                    x, y = np.clip(frame.to_local(world) / frame.scale, 0.0, 1.0)
                    return Point2(float(x), float(y))

                profiles = []
                for prof in sketch.profiles:
                    loops = []
                    for loop in prof.loops:
                        curves = tuple(
                            replace(c, center=plain(c.center)) if isinstance(c, Circle) else replace(c, start=plain(c.start))
                            for c in loop.curves
                        )
                        loops.append(replace(loop, curves=curves))
                    profiles.append(replace(prof, loops=tuple(loops)))
                sketches.append(replace(sketch, profiles=tuple(profiles)))
            step = replace(step, sketches=tuple(sketches))
        steps.append(step)
        solid = after
    return replace(program, steps=tuple(steps)), frames


def _rebuild(program: Program, segments: int) -> TriangleMesh:
    mesh = execute_program(program, segments).final.mesh
    if not is_valid_build(mesh):
        raise ValueError("rebuilt solid is empty or not watertight")
    return mesh


def study_model(name: str, program: Program, gt_mesh: TriangleMesh, cfg: QuantStudyConfig) -> list[StudyRow]:
    """All (codec, q) rows for one ground-truth program."""
    plain, frames = resolve_snaps(program)
    rows = []
    for q in cfg.q_values:
        qc = QuantConfig(q)
        for codec in cfg.codecs:
            try:
                if codec == "pointer":
                    rebuilt = decode(encode(program, qc))
                else:
                    rebuilt = decode_legacy(encode_legacy(plain, qc, frames))
                mesh = _rebuild(rebuilt, cfg.segments)
                rows.append(StudyRow(name, codec, q, True, chamfer_distance(gt_mesh, mesh, cfg.n_samples, cfg.seed)))
            except (PointerCADError, ValueError) as exc:
                rows.append(StudyRow(name, codec, q, False, None, type(exc).__name__))
    return rows


def _usable(name: str, program: Program, cfg: QuantStudyConfig) -> bool:
    """Both codecs must be able to encode the program at every q."""
    if not legacy_compatible(program):
        return False
    try:
        plain, frames = resolve_snaps(program)
        for q in cfg.q_values:
            encode(program, QuantConfig(q))
            encode_legacy(plain, QuantConfig(q), frames)
    except PointerCADError:
        return False
    return True


def self_noise(meshes, n: int, seed: int) -> float:
    """Median CD between two independent samplings of the same surface."""
    vals = []
    for m in meshes:
        m = normalize_to_unit_box(m)
        P = sample_surface(m, n, np.random.default_rng(seed))
        Q = sample_surface(m, n, np.random.default_rng(seed + 1))
        vals.append(chamfer_from_points(P, Q))
    return float(np.median(vals)) if vals else 0.0


def _study_task(args):
    return study_model(*args)


def run_study(models, cfg: QuantStudyConfig, jobs: int = 1) -> StudyResult:
    """``models`` yields (name, program, gt_mesh) triples."""
    models = list(models)
    result = StudyResult()
    kept = []
    for name, program, mesh in models:
        if _usable(name, program, cfg):
            kept.append((name, program, mesh))
        else:
            result.excluded.append(name)
    tasks = [(name, program, mesh, cfg) for name, program, mesh in kept]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            chunks = list(pool.map(_study_task, tasks))
    else:
        chunks = [_study_task(t) for t in tasks]
    for rows in chunks:
        result.rows.extend(rows)
    result.noise = self_noise([m for _, _, m in kept], cfg.n_samples, cfg.seed)
    return result
