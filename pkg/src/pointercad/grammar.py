"""Program AST, validator, and the token grammar (serialize / parse).

Grammar, with ``+`` meaning one or more::

    P       := nv nv (pe | pd)
    Line    := sx P
    Circle  := sx P nv
    Arc     := sx P ag or
    Loop    := sl (Line | Circle | Arc)+
    Profile := sp Loop+
    CS      := dr P ag nv
    Sketch  := ss pe CS Profile+
    Extrude := se nv nv bo
    EPart   := Sketch+ Extrude
    Chamfer := sc nv pe+
    Fillet  := sf nv pe+
    Program := ((EPart | Chamfer | Fillet) es)* (EPart | Chamfer | Fillet) em

Values carried by the AST are already normalized: lengths and positions are
fractions of the program extent, angles are degrees.  The frame scale is
the one exception, it lives in (0, 2] and is stored as half its value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Union

from . import tokens as T
from .errors import (
    GrammarError,
    MissingTerminator,
    TrailingTokens,
    TruncatedStream,
    ValidationFailed,
)
from .tokens import QuantConfig, ValueKind, dequantize_value, quantize_value

EPS_CLOSE = 1e-6
MAX_EDGE_POINTERS = 64
POINTER_KINDS = ("face", "edge", "base_plane")
BASE_PLANES = ("Right", "Front", "Top")


@dataclass(frozen=True)
class PointerRef:
    kind: str
    stable_id: str

    def __post_init__(self):
        if self.kind not in POINTER_KINDS:
            raise ValueError(f"unknown pointer kind {self.kind!r}")


@dataclass(frozen=True)
class Point2:
    x: float
    y: float
    snap: PointerRef | None = None


@dataclass(frozen=True)
class Line:
    start: Point2


@dataclass(frozen=True)
class Arc:
    start: Point2
    sweep: float
    orientation: str = "CCW"


@dataclass(frozen=True)
class Circle:
    center: Point2
    radius: float


Curve = Union[Line, Arc, Circle]


@dataclass(frozen=True)
class Loop:
    curves: tuple[Curve, ...]


@dataclass(frozen=True)
class Profile:
    loops: tuple[Loop, ...]


@dataclass(frozen=True)
class FrameSpec:
    direction: str
    origin: Point2
    rotation: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True)
class Placement:
    """Absolute sketch placement used by the legacy (pointer-free) codec.

    ``origin`` is in normalized program coordinates, ``euler`` holds the
    Z-Y-X intrinsic angles in degrees.
    """

    origin: tuple[float, float, float]
    euler: tuple[float, float, float]


@dataclass(frozen=True)
class Sketch:
    plane: PointerRef | Placement
    frame: FrameSpec
    profiles: tuple[Profile, ...]


@dataclass(frozen=True)
class Extrude:
    e_pos: float
    e_neg: float
    op: str = "New"


@dataclass(frozen=True)
class EPart:
    sketches: tuple[Sketch, ...]
    extrude: Extrude


@dataclass(frozen=True)
class Chamfer:
    distance: float
    edges: tuple[PointerRef, ...]


@dataclass(frozen=True)
class Fillet:
    radius: float
    edges: tuple[PointerRef, ...]


Step = Union[EPart, Chamfer, Fillet]


@dataclass(frozen=True)
class Program:
    steps: tuple[Step, ...]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    size: float = 1.0

    def to_world(self, p):
        return tuple(o + self.size * c for o, c in zip(self.origin, p))


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[int, ...]
    pointers: Mapping[int, PointerRef] = field(default_factory=dict)
    q: int = 8
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    size: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "pointers", MappingProxyType(dict(self.pointers)))

    def __eq__(self, other):
        if not isinstance(other, TokenStream):
            return NotImplemented
        return (
            self.tokens == other.tokens
            and dict(self.pointers) == dict(other.pointers)
            and self.q == other.q
            and tuple(self.origin) == tuple(other.origin)
            and self.size == other.size
        )

    def __hash__(self):
        return hash((self.tokens, self.q))

    def __len__(self):
        return len(self.tokens)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    code: str
    path: str
    message: str = ""

    def __str__(self):
        return f"{self.code} at {self.path}" + (f": {self.message}" if self.message else "")


def _curve_start(curve: Curve) -> Point2:
    return curve.center if isinstance(curve, Circle) else curve.start


def _in_unit(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0


def _check_point(p: Point2, path: str, out: list, what="edge"):
    if not _in_unit(p.x):
        out.append(Diagnostic("ValueOutOfRange", f"{path}.x", f"{p.x!r} not in [0, 1]"))
    if not _in_unit(p.y):
        out.append(Diagnostic("ValueOutOfRange", f"{path}.y", f"{p.y!r} not in [0, 1]"))
    if p.snap is not None and p.snap.kind != "edge":
        out.append(Diagnostic("BadPointerKind", f"{path}.snap", f"snap must reference an {what}"))


def _check_loop(loop: Loop, path: str, out: list):
    curves = loop.curves
    if not curves:
        out.append(Diagnostic("EmptyLoop", path))
        return
    circles = [c for c in curves if isinstance(c, Circle)]
    if circles and len(curves) > 1:
        out.append(Diagnostic("MixedCircleLoop", path, "a circle must be alone in its loop"))
    for i, c in enumerate(curves):
        cp = f"{path}.curves[{i}]"
        if isinstance(c, Circle):
            _check_point(c.center, f"{cp}.center", out)
            if not (isinstance(c.radius, (int, float)) and c.radius > 0):
                out.append(Diagnostic("DegeneratePrimitive", f"{cp}.radius", f"radius {c.radius!r} <= 0"))
            elif c.radius > 1.0:
                out.append(Diagnostic("ValueOutOfRange", f"{cp}.radius", f"{c.radius!r} > 1"))
            continue
        _check_point(c.start, f"{cp}.start", out)
        if isinstance(c, Arc):
            if not (0.0 < c.sweep < 360.0):
                out.append(Diagnostic("SweepOutOfRange", f"{cp}.sweep", f"{c.sweep!r} not in (0, 360)"))
            if c.orientation not in T.ORIENTATIONS:
                out.append(Diagnostic("BadOrientation", f"{cp}.orientation", repr(c.orientation)))
    if circles:
        return
    # the chained form closes structurally; what can still go wrong is a chain
    # that collapses (a single curve, or consecutive coincident points)
    if len(curves) < 2:
        out.append(Diagnostic("ClosureViolation", path, "an open chain of one curve cannot close"))
        return
    for i, c in enumerate(curves):
        a = c.start
        b = curves[(i + 1) % len(curves)].start
        if math.hypot(a.x - b.x, a.y - b.y) <= EPS_CLOSE:
            out.append(Diagnostic("ClosureViolation", f"{path}.curves[{i}]", "zero-length curve"))


def _check_edges(edges, path: str, out: list):
    if not edges:
        out.append(Diagnostic("EmptyEdgeSet", path))
    if len(edges) > MAX_EDGE_POINTERS:
        out.append(Diagnostic("TooManyEdges", path, f"{len(edges)} > {MAX_EDGE_POINTERS}"))
    for i, e in enumerate(edges):
        if e.kind != "edge":
            out.append(Diagnostic("BadPointerKind", f"{path}[{i}]", "chamfer/fillet pointers must be edges"))


def validate(program: Program) -> list[Diagnostic]:
    """Return every structural violation in ``program``; empty means valid."""
    out: list[Diagnostic] = []
    if not (isinstance(program.size, (int, float)) and program.size > 0 and math.isfinite(program.size)):
        out.append(Diagnostic("BadNormalization", "size", repr(program.size)))
    if not program.steps:
        out.append(Diagnostic("EmptyProgram", "steps"))
        return out
    first = program.steps[0]
    if not (isinstance(first, EPart) and first.extrude.op == "New"):
        out.append(Diagnostic("FirstStepNotNew", "steps[0]", "the first step must be a New extrusion"))
    for k, step in enumerate(program.steps):
        sp = f"steps[{k}]"
        if isinstance(step, EPart):
            if not step.sketches:
                out.append(Diagnostic("EmptyPart", f"{sp}.sketches"))
            for s, sketch in enumerate(step.sketches):
                kp = f"{sp}.sketches[{s}]"
                plane = sketch.plane
                if isinstance(plane, PointerRef) and plane.kind == "edge":
                    out.append(Diagnostic("BadPointerKind", f"{kp}.plane", "sketch plane must be a face"))
                fr = sketch.frame
                if fr.direction not in T.DIRECTIONS:
                    out.append(Diagnostic("BadDirection", f"{kp}.frame.direction", repr(fr.direction)))
                _check_point(fr.origin, f"{kp}.frame.origin", out)
                if not (0.0 <= fr.rotation < 360.0):
                    out.append(Diagnostic("ValueOutOfRange", f"{kp}.frame.rotation", repr(fr.rotation)))
                if not (0.0 < fr.scale <= 2.0):
                    out.append(Diagnostic("ValueOutOfRange", f"{kp}.frame.scale", repr(fr.scale)))
                if not sketch.profiles:
                    out.append(Diagnostic("EmptySketch", f"{kp}.profiles"))
                for p, prof in enumerate(sketch.profiles):
                    pp = f"{kp}.profiles[{p}]"
                    if not prof.loops:
                        out.append(Diagnostic("EmptyProfile", pp))
                    for l, loop in enumerate(prof.loops):
                        _check_loop(loop, f"{pp}.loops[{l}]", out)
            ex = step.extrude
            for name in ("e_pos", "e_neg"):
                if not _in_unit(getattr(ex, name)):
                    out.append(Diagnostic("ValueOutOfRange", f"{sp}.extrude.{name}", repr(getattr(ex, name))))
            if _in_unit(ex.e_pos) and _in_unit(ex.e_neg) and ex.e_pos + ex.e_neg <= 0:
                out.append(Diagnostic("ZeroExtrusion", f"{sp}.extrude"))
            if ex.op not in T.BOOLEANS:
                out.append(Diagnostic("BadBoolean", f"{sp}.extrude.op", repr(ex.op)))
        elif isinstance(step, (Chamfer, Fillet)):
            name = "distance" if isinstance(step, Chamfer) else "radius"
            v = getattr(step, name)
            if not (isinstance(v, (int, float)) and v > 0):
                out.append(Diagnostic("DegeneratePrimitive", f"{sp}.{name}", f"{v!r} <= 0"))
            elif v > 1.0:
                out.append(Diagnostic("ValueOutOfRange", f"{sp}.{name}", repr(v)))
            _check_edges(step.edges, f"{sp}.edges", out)
        else:
            out.append(Diagnostic("UnknownStep", sp, type(step).__name__))
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self, cfg: QuantConfig):
        self.cfg = cfg
        self.tokens: list[int] = []
        self.pointers: dict[int, PointerRef] = {}

    def label(self, t: int):
        self.tokens.append(t)

    def value(self, v: float, kind=ValueKind.NV, path=""):
        self.tokens.append(T.VALUE_OFFSET + quantize_value(v, self.cfg, kind, path))

    def pointer(self, ref: PointerRef | None):
        if ref is None:
            self.tokens.append(T.PD)
        else:
            self.pointers[len(self.tokens)] = ref
            self.tokens.append(T.PE)

    def point(self, p: Point2, path: str):
        self.value(p.x, path=f"{path}.x")
        self.value(p.y, path=f"{path}.y")
        self.pointer(p.snap)


def _write_step(w: _Writer, step: Step, sp: str):
    if isinstance(step, EPart):
        for s, sketch in enumerate(step.sketches):
            kp = f"{sp}.sketches[{s}]"
            w.label(T.SS)
            w.pointer(sketch.plane)
            fr = sketch.frame
            w.label(T.direction_token(fr.direction))
            w.point(fr.origin, f"{kp}.frame.origin")
            w.value(fr.rotation, ValueKind.AG, f"{kp}.frame.rotation")
            w.value(fr.scale / 2.0, path=f"{kp}.frame.scale")
            for p, prof in enumerate(sketch.profiles):
                w.label(T.SP)
                for l, loop in enumerate(prof.loops):
                    w.label(T.SL)
                    for c, curve in enumerate(loop.curves):
                        cp = f"{kp}.profiles[{p}].loops[{l}].curves[{c}]"
                        w.label(T.SX)
                        if isinstance(curve, Circle):
                            w.point(curve.center, f"{cp}.center")
                            w.value(curve.radius, path=f"{cp}.radius")
                        else:
                            w.point(curve.start, f"{cp}.start")
                            if isinstance(curve, Arc):
                                w.value(curve.sweep, ValueKind.AG, f"{cp}.sweep")
                                w.label(T.orientation_token(curve.orientation))
        ex = step.extrude
        w.label(T.SE)
        w.value(ex.e_pos, path=f"{sp}.extrude.e_pos")
        w.value(ex.e_neg, path=f"{sp}.extrude.e_neg")
        w.label(T.boolean_token(ex.op))
    else:
        chamfer = isinstance(step, Chamfer)
        w.label(T.SC if chamfer else T.SF)
        w.value(step.distance if chamfer else step.radius, path=f"{sp}.{'distance' if chamfer else 'radius'}")
        for e in step.edges:
            w.pointer(e)


def serialize(program: Program, cfg: QuantConfig | None = None) -> TokenStream:
    """Quantize ``program`` into a token stream.

    Raises ValidationFailed when the program has structural violations and
    RangeError (with the AST path) when a value cannot be quantized.
    """
    cfg = cfg or QuantConfig()
    diags = validate(program)
    if diags:
        raise ValidationFailed(diags)
    for k, step in enumerate(program.steps):
        if isinstance(step, EPart) and any(isinstance(s.plane, Placement) for s in step.sketches):
            raise ValidationFailed([Diagnostic("LegacyPlacement", f"steps[{k}]", "absolute placement in a pointer program")])
    w = _Writer(cfg)
    last = len(program.steps) - 1
    for k, step in enumerate(program.steps):
        _write_step(w, step, f"steps[{k}]")
        w.label(T.EM if k == last else T.ES)
    return TokenStream(tuple(w.tokens), w.pointers, cfg.q, tuple(program.origin), program.size)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _describe(tok) -> str:
    names = {v: k for k, v in T.LABELS.items()}
    if tok in names:
        return names[tok]
    if tok in (T.OR_CW, T.OR_CCW):
        return "or"
    if T.DR_BASE <= tok < T.BO_BASE:
        return "dr"
    if T.BO_BASE <= tok < T.VALUE_OFFSET:
        return "bo"
    return "value" if tok >= T.VALUE_OFFSET else f"id {tok}"


class _Reader:
    def __init__(self, stream: TokenStream):
        self.toks = stream.tokens
        self.ptrs = stream.pointers
        self.cfg = QuantConfig(stream.q)
        self.pos = 0

    def peek(self, offset=0):
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def fail(self, expected: str):
        found = self.peek()
        if found is None:
            raise TruncatedStream(self.pos, expected, None, f"stream ended at {self.pos}, expected {expected}")
        raise GrammarError(self.pos, expected, found, f"at {self.pos}: expected {expected}, found {_describe(found)} ({found})")

    def expect(self, *accepted: int, what: str) -> int:
        t = self.peek()
        if t is None or t not in accepted:
            self.fail(what)
        self.pos += 1
        return t

    def is_value(self, t) -> bool:
        return t is not None and T.is_value_token(t, self.cfg)

    def value(self, kind=ValueKind.NV, what="nv") -> float:
        t = self.peek()
        if not self.is_value(t):
            self.fail(what)
        self.pos += 1
        return dequantize_value(t - T.VALUE_OFFSET, self.cfg, kind)

    def pointer(self, allow_empty=True) -> PointerRef | None:
        accepted = (T.PE, T.PD) if allow_empty else (T.PE,)
        t = self.expect(*accepted, what="pe/pd" if allow_empty else "pe")
        if t == T.PD:
            return None
        ref = self.ptrs.get(self.pos - 1)
        if ref is None:
            self.pos -= 1
            raise GrammarError(self.pos, "pointer payload", T.PE, f"at {self.pos}: pe token without payload")
        return ref

    def point(self) -> Point2:
        x = self.value()
        y = self.value()
        return Point2(x, y, self.pointer())

    def curve(self) -> Curve:
        self.expect(T.SX, what="sx")
        p = self.point()
        if self.is_value(self.peek()):
            if self.peek(1) in (T.OR_CW, T.OR_CCW):
                sweep = self.value(ValueKind.AG, "ag")
                orient = T.orientation_of(self.expect(T.OR_CW, T.OR_CCW, what="or"))
                return Arc(p, sweep, orient)
            return Circle(p, self.value())
        return Line(p)

    def loop(self) -> Loop:
        self.expect(T.SL, what="sl")
        curves = [self.curve()]
        while self.peek() == T.SX:
            curves.append(self.curve())
        return Loop(tuple(curves))

    def profile(self) -> Profile:
        self.expect(T.SP, what="sp")
        loops = [self.loop()]
        while self.peek() == T.SL:
            loops.append(self.loop())
        return Profile(tuple(loops))

    def sketch(self) -> Sketch:
        self.expect(T.SS, what="ss")
        plane = self.pointer(allow_empty=False)
        dr = T.direction_of(self.expect(*range(T.DR_BASE, T.BO_BASE), what="dr"))
        origin = self.point()
        rotation = self.value(ValueKind.AG, "ag")
        scale = 2.0 * self.value()
        profiles = [self.profile()]
        while self.peek() == T.SP:
            profiles.append(self.profile())
        return Sketch(plane, FrameSpec(dr, origin, rotation, scale), tuple(profiles))

    def edges(self) -> tuple[PointerRef, ...]:
        refs = [self.pointer(allow_empty=False)]
        while self.peek() == T.PE:
            if len(refs) == MAX_EDGE_POINTERS:
                raise GrammarError(self.pos, f"at most {MAX_EDGE_POINTERS} edge pointers", T.PE)
            refs.append(self.pointer(allow_empty=False))
        return tuple(refs)

    def step(self) -> Step:
        t = self.peek()
        if t == T.SS:
            sketches = [self.sketch()]
            while self.peek() == T.SS:
                sketches.append(self.sketch())
            self.expect(T.SE, what="ss/se")
            e_pos = self.value()
            e_neg = self.value()
            op = T.boolean_of(self.expect(*range(T.BO_BASE, T.VALUE_OFFSET), what="bo"))
            return EPart(tuple(sketches), Extrude(e_pos, e_neg, op))
        if t in (T.SC, T.SF):
            self.pos += 1
            v = self.value()
            edges = self.edges()
            return Chamfer(v, edges) if t == T.SC else Fillet(v, edges)
        self.fail("ss/sc/sf")


def parse(stream: TokenStream) -> Program:
    """Recursive-descent parse of a complete token stream."""
    r = _Reader(stream)
    steps = []
    while True:
        if r.peek() is None:
            if steps:
                raise MissingTerminator(r.pos, "ss/sc/sf", None, f"stream ended after es at {r.pos}; em required on the last step")
            r.fail("ss/sc/sf")
        steps.append(r.step())
        term = r.expect(T.ES, T.EM, what="es/em")
        if term == T.EM:
            break
    if r.pos < len(r.toks):
        raise TrailingTokens(r.pos, "end of stream", r.toks[r.pos], f"{len(r.toks) - r.pos} token(s) after em")
    return Program(tuple(steps), tuple(stream.origin), stream.size)


# ---------------------------------------------------------------------------
# human-readable JSON AST
# ---------------------------------------------------------------------------


def _ref_to(ref):
    return None if ref is None else {"kind": ref.kind, "stable_id": ref.stable_id}


def _ref_from(d):
    return None if d is None else PointerRef(d["kind"], d["stable_id"])


def _pt_to(p: Point2):
    d = {"x": p.x, "y": p.y}
    if p.snap is not None:
        d["snap"] = _ref_to(p.snap)
    return d


def _pt_from(d) -> Point2:
    return Point2(float(d["x"]), float(d["y"]), _ref_from(d.get("snap")))


def _curve_to(c: Curve):
    if isinstance(c, Line):
        return {"type": "line", "start": _pt_to(c.start)}
    if isinstance(c, Arc):
        return {"type": "arc", "start": _pt_to(c.start), "sweep": c.sweep, "orientation": c.orientation}
    return {"type": "circle", "center": _pt_to(c.center), "radius": c.radius}


def _curve_from(d) -> Curve:
    kind = d["type"]
    if kind == "line":
        return Line(_pt_from(d["start"]))
    if kind == "arc":
        return Arc(_pt_from(d["start"]), float(d["sweep"]), d.get("orientation", "CCW"))
    if kind == "circle":
        return Circle(_pt_from(d["center"]), float(d["radius"]))
    raise ValueError(f"unknown curve type {kind!r}")


def program_to_dict(program: Program) -> dict:
    steps = []
    for step in program.steps:
        if isinstance(step, EPart):
            sketches = []
            for s in step.sketches:
                if isinstance(s.plane, Placement):
                    plane = {"placement": {"origin": list(s.plane.origin), "euler": list(s.plane.euler)}}
                else:
                    plane = _ref_to(s.plane)
                sketches.append(
                    {
                        "plane": plane,
                        "frame": {
                            "direction": s.frame.direction,
                            "origin": _pt_to(s.frame.origin),
                            "rotation": s.frame.rotation,
                            "scale": s.frame.scale,
                        },
                        "profiles": [[[_curve_to(c) for c in loop.curves] for loop in prof.loops] for prof in s.profiles],
                    }
                )
            ex = step.extrude
            steps.append({"type": "extrude", "sketches": sketches, "e_pos": ex.e_pos, "e_neg": ex.e_neg, "op": ex.op})
        elif isinstance(step, Chamfer):
            steps.append({"type": "chamfer", "distance": step.distance, "edges": [_ref_to(e) for e in step.edges]})
        else:
            steps.append({"type": "fillet", "radius": step.radius, "edges": [_ref_to(e) for e in step.edges]})
    return {"origin": list(program.origin), "size": program.size, "steps": steps}


def program_from_dict(d: dict) -> Program:
    steps = []
    for sd in d["steps"]:
        kind = sd["type"]
        if kind == "extrude":
            sketches = []
            for s in sd["sketches"]:
                pl = s["plane"]
                if "placement" in pl:
                    plane = Placement(tuple(pl["placement"]["origin"]), tuple(pl["placement"]["euler"]))
                else:
                    plane = _ref_from(pl)
                fr = s["frame"]
                frame = FrameSpec(fr["direction"], _pt_from(fr["origin"]), float(fr["rotation"]), float(fr["scale"]))
                profiles = tuple(
                    Profile(tuple(Loop(tuple(_curve_from(c) for c in loop)) for loop in prof)) for prof in s["profiles"]
                )
                sketches.append(Sketch(plane, frame, profiles))
            steps.append(EPart(tuple(sketches), Extrude(float(sd["e_pos"]), float(sd["e_neg"]), sd["op"])))
        elif kind == "chamfer":
            steps.append(Chamfer(float(sd["distance"]), tuple(_ref_from(e) for e in sd["edges"])))
        elif kind == "fillet":
            steps.append(Fillet(float(sd["radius"]), tuple(_ref_from(e) for e in sd["edges"])))
        else:
            raise ValueError(f"unknown step type {kind!r}")
    return Program(tuple(steps), tuple(float(v) for v in d.get("origin", (0, 0, 0))), float(d.get("size", 1.0)))


def iter_pointers(program: Program):
    """Yield ``(step_index, PointerRef)`` for every pointer in program order."""
    for k, step in enumerate(program.steps):
        if isinstance(step, EPart):
            for s in step.sketches:
                if isinstance(s.plane, PointerRef):
                    yield k, s.plane
                if s.frame.origin.snap is not None:
                    yield k, s.frame.origin.snap
                for prof in s.profiles:
                    for loop in prof.loops:
                        for c in loop.curves:
                            snap = _curve_start(c).snap
                            if snap is not None:
                                yield k, snap
        else:
            for e in step.edges:
                yield k, e
