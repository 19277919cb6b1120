"""Program execution: resolve pointers step by step and apply each operation."""

from __future__ import annotations

from dataclasses import dataclass, field

import manifold3d

from ..errors import KernelError, PointerResolutionFailed
from ..grammar import BASE_PLANES, Chamfer, EPart, Fillet, Placement, PointerRef, Program
from .blend import blend
from .frame import BASE_PLANE_SURFACES, Frame, build_frame, placement_frame, snap_point
from .ops import TagAllocator, combine, coplanar_shifter, prism
from .profile import DEFAULT_SEGMENTS, evaluate_profile
from .solid import Solid, TriangleMesh


@dataclass
class ExecutionResult:
    solids: list[Solid] = field(default_factory=list)
    frames: dict[tuple[int, int], Frame] = field(default_factory=dict)

    @property
    def final(self) -> Solid:
        return self.solids[-1] if self.solids else Solid.empty()


def resolve_face(solid: Solid, ref: PointerRef):
    """Carrier plane (or surface) of a face / base-plane pointer."""
    if ref.kind == "base_plane":
        if ref.stable_id not in BASE_PLANES:
            raise PointerResolutionFailed(f"unknown base plane {ref.stable_id!r}")
        return BASE_PLANE_SURFACES[ref.stable_id]
    if ref.kind != "face":
        raise PointerResolutionFailed(f"{ref.kind} pointer where a face was expected")
    face = solid.face(ref.stable_id)
    if face is None:
        raise PointerResolutionFailed(f"face {ref.stable_id!r} does not exist in the current model")
    return face.surface


def resolve_edge(solid: Solid, ref: PointerRef):
    if ref.kind != "edge":
        raise PointerResolutionFailed(f"{ref.kind} pointer where an edge was expected")
    edge = solid.edge(ref.stable_id)
    if edge is None:
        raise PointerResolutionFailed(f"edge {ref.stable_id!r} does not exist in the current model")
    return edge


def snapper(solid: Solid):
    def snap(ref, point, plane_point, w):
        return snap_point(resolve_edge(solid, ref).curve, point, plane_point, w)

    return snap


def run_step(solid: Solid, step, k: int, program: Program, segments: int = DEFAULT_SEGMENTS, frames=None) -> Solid:
    alloc = TagAllocator(k)
    snap = snapper(solid)
    if isinstance(step, EPart):
        tools, surfaces = [], {}
        for s, sketch in enumerate(step.sketches):
            if isinstance(sketch.plane, Placement):
                frame = placement_frame(sketch.plane, program.origin, program.size)
            else:
                plane = resolve_face(solid, sketch.plane)
                frame = build_frame(plane, sketch.frame, program.origin, program.size, snap)
            if frames is not None:
                frames[(k, s)] = frame
            shift = coplanar_shifter(solid, step.extrude.op, program.size, frame)
            for profile in sketch.profiles:
                region = evaluate_profile(profile, frame, snap, segments)
                L = program.size
                man, surf = prism(region, frame, L * step.extrude.e_pos, L * step.extrude.e_neg, alloc, shift)
                tools.append(man)
                surfaces.update(surf)
        tool = tools[0] if len(tools) == 1 else manifold3d.Manifold.batch_boolean(tools, manifold3d.OpType.Add)
        return combine(solid, tool, surfaces, step.extrude.op)
    if isinstance(step, (Chamfer, Fillet)):
        edges = [resolve_edge(solid, ref) for ref in step.edges]
        unique = list({e.stable_id: e for e in edges}.values())
        if isinstance(step, Chamfer):
            return blend(solid, unique, program.size * step.distance, "chamfer", alloc, segments)
        return blend(solid, unique, program.size * step.radius, "fillet", alloc, segments)
    raise TypeError(f"unknown step type {type(step).__name__}")


def execute_program(program: Program, segments: int = DEFAULT_SEGMENTS, stop_after: int | None = None) -> ExecutionResult:
    """Apply every step in order, keeping each intermediate solid.

    Kernel and pointer errors are re-raised with ``step_index`` set.
    """
    result = ExecutionResult()
    solid = Solid.empty()
    for k, step in enumerate(program.steps):
        if stop_after is not None and k > stop_after:
            break
        try:
            solid = run_step(solid, step, k, program, segments, result.frames)
        except (KernelError, PointerResolutionFailed) as exc:
            exc.step_index = k
            raise
        result.solids.append(solid)
    return result


def tessellate(solid: Solid, tol: float | None = None) -> TriangleMesh:
    """Triangle mesh of ``solid``.

    Curved walls are faceted when they are built (see ``segments`` in
    :func:`execute_program`), so ``tol`` is accepted for interface symmetry only.
    """
    return solid.mesh
