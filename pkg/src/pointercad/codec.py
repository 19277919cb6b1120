"""Program <-> token stream codec, the JSON stream format, and the legacy codec.

The legacy codec mirrors the older absolute-coordinate representation: every
sketch is placed by three Z-Y-X Euler angles and three translations, points
are quantized in absolute (program-normalized) units, and nothing can point
at existing geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tokens as T
from .errors import (
    MalformedProgram,
    RangeError,
    TruncatedStream,
    UnknownToken,
    UnsupportedOperation,
    GrammarError,
)
from .grammar import (
    Arc,
    Chamfer,
    Circle,
    EPart,
    Extrude,
    Fillet,
    FrameSpec,
    Line,
    Loop,
    Placement,
    Point2,
    PointerRef,
    Profile,
    Program,
    Sketch,
    TokenStream,
    parse,
    serialize,
    validate,
)
from .tokens import QuantConfig, ValueKind, dequantize_value, quantize_value

__all__ = [
    "encode",
    "decode",
    "encode_legacy",
    "decode_legacy",
    "LegacyStream",
    "stream_to_json",
    "stream_from_json",
    "save_stream",
    "load_stream",
]


def _first_range_error(program: Program):
    for d in validate(program):
        if d.code != "ValueOutOfRange":
            continue
        try:
            value = _lookup(program, d.path)
        except (AttributeError, IndexError):
            value = None
        raise RangeError(value, "normalized range", d.path)


def _lookup(obj, path: str):
    for part in path.replace("]", "").split("."):
        name, _, idx = part.partition("[")
        obj = getattr(obj, name)
        if idx:
            obj = obj[int(idx)]
    return obj


def encode(program: Program, cfg: QuantConfig | None = None) -> TokenStream:
    cfg = cfg or QuantConfig()
    if not program.steps:
        raise MalformedProgram("a program needs at least one step")
    _first_range_error(program)
    return serialize(program, cfg)


def decode(stream: TokenStream, cfg: QuantConfig | None = None) -> Program:
    if cfg is not None and cfg.q != stream.q:
        stream = TokenStream(stream.tokens, stream.pointers, cfg.q, stream.origin, stream.size)
    qc = QuantConfig(stream.q)
    for i, t in enumerate(stream.tokens):
        if not T.is_known_token(t, qc):
            raise UnknownToken(i, t)
    return parse(stream)


# ---------------------------------------------------------------------------
# JSON stream format
# ---------------------------------------------------------------------------


def stream_to_json(stream: TokenStream) -> dict:
    pointers = []
    step = 0
    for pos, t in enumerate(stream.tokens):
        if pos in stream.pointers:
            ref = stream.pointers[pos]
            pointers.append({"pos": pos, "entity_ref": {"step_index": step, "kind": ref.kind, "stable_id": ref.stable_id}})
        if t == T.ES:
            step += 1
    return {
        "q": stream.q,
        "origin": list(stream.origin),
        "size": stream.size,
        "tokens": list(stream.tokens),
        "pointers": pointers,
    }


def stream_from_json(d: dict) -> TokenStream:
    ptrs = {}
    for p in d.get("pointers", []):
        ref = p["entity_ref"]
        ptrs[int(p["pos"])] = PointerRef(ref["kind"], ref["stable_id"])
    return TokenStream(
        tuple(int(t) for t in d["tokens"]),
        ptrs,
        int(d.get("q", 8)),
        tuple(float(v) for v in d.get("origin", (0.0, 0.0, 0.0))),
        float(d.get("size", 1.0)),
    )


def save_stream(stream, path):
    doc = stream.to_json() if isinstance(stream, LegacyStream) else stream_to_json(stream)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_stream(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") == "legacy":
        return LegacyStream.from_json(doc)
    return stream_from_json(doc)


# ---------------------------------------------------------------------------
# legacy absolute-coordinate codec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LegacyStream:
    tokens: tuple[int, ...]
    q: int = 8
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    size: float = 1.0

    def to_json(self) -> dict:
        return {"format": "legacy", "q": self.q, "origin": list(self.origin), "size": self.size, "tokens": list(self.tokens)}

    @classmethod
    def from_json(cls, d: dict) -> "LegacyStream":
        return cls(tuple(int(t) for t in d["tokens"]), int(d["q"]), tuple(d["origin"]), float(d["size"]))


def euler_zyx_from_matrix(R: np.ndarray) -> tuple[float, float, float]:
    """Intrinsic Z-Y-X angles (degrees, in [0, 360)) with R = Rz @ Ry @ Rx."""
    sy = -R[2, 0]
    sy = max(-1.0, min(1.0, sy))
    ty = math.asin(sy)
    if abs(abs(sy) - 1.0) < 1e-12:
        # gimbal lock: fold the whole in-plane spin into the z angle
        tx = 0.0
        tz = math.atan2(-R[0, 1], R[1, 1])
    else:
        tz = math.atan2(R[1, 0], R[0, 0])
        tx = math.atan2(R[2, 1], R[2, 2])
    return tuple(math.degrees(a) % 360.0 for a in (tz, ty, tx))


def matrix_from_euler_zyx(tz: float, ty: float, tx: float) -> np.ndarray:
    a, b, c = (math.radians(v) for v in (tz, ty, tx))
    Rz = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
    Ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    Rx = np.array([[1, 0, 0], [0, math.cos(c), -math.sin(c)], [0, math.sin(c), math.cos(c)]])
    return Rz @ Ry @ Rx


def encode_legacy(program: Program, cfg: QuantConfig | None = None, frames=None) -> LegacyStream:
    """Serialize ``program`` in the absolute six-parameter form.

    ``frames`` optionally supplies the world frame of every sketch (as
    produced by :func:`pointercad.kernel.execute.execute_program`); when
    omitted the program is executed to find them.
    """
    cfg = cfg or QuantConfig()
    if not program.steps:
        raise MalformedProgram("a program needs at least one step")
    for k, step in enumerate(program.steps):
        if isinstance(step, (Chamfer, Fillet)):
            raise UnsupportedOperation(f"steps[{k}]: {type(step).__name__.lower()} has no legacy encoding")
    if frames is None:
        from .kernel.execute import execute_program

        frames = execute_program(program).frames
    L = program.size
    o = np.asarray(program.origin, dtype=float)
    toks: list[int] = []

    def val(v, kind=ValueKind.NV, path=""):
        toks.append(T.VALUE_OFFSET + quantize_value(v, cfg, kind, path))

    last = len(program.steps) - 1
    for k, step in enumerate(program.steps):
        for s, sketch in enumerate(step.sketches):
            sp = f"steps[{k}].sketches[{s}]"
            frame = frames[(k, s)]
            toks.append(T.SS)
            R = np.column_stack([frame.u, frame.v, frame.w])
            for angle in euler_zyx_from_matrix(R):
                val(angle, ValueKind.AG, f"{sp}.euler")
            t = (np.asarray(frame.origin) - o) / L
            for i, c in enumerate(t):
                val(float(c), path=f"{sp}.translation[{i}]")
            rel = frame.scale / L  # sketch units -> absolute normalized units
            for p, prof in enumerate(sketch.profiles):
                toks.append(T.SP)
                for l, loop in enumerate(prof.loops):
                    toks.append(T.SL)
                    for c, curve in enumerate(loop.curves):
                        cp = f"{sp}.profiles[{p}].loops[{l}].curves[{c}]"
                        toks.append(T.SX)
                        pt = curve.center if isinstance(curve, Circle) else curve.start
                        val(pt.x * rel, path=f"{cp}.x")
                        val(pt.y * rel, path=f"{cp}.y")
                        if isinstance(curve, Circle):
                            val(curve.radius * rel, path=f"{cp}.radius")
                        elif isinstance(curve, Arc):
                            val(curve.sweep, ValueKind.AG, f"{cp}.sweep")
                            toks.append(T.orientation_token(curve.orientation))
        ex = step.extrude
        toks.append(T.SE)
        val(ex.e_pos, path=f"steps[{k}].extrude.e_pos")
        val(ex.e_neg, path=f"steps[{k}].extrude.e_neg")
        toks.append(T.boolean_token(ex.op))
        toks.append(T.EM if k == last else T.ES)
    return LegacyStream(tuple(toks), cfg.q, tuple(program.origin), program.size)


def decode_legacy(stream: LegacyStream) -> Program:
    """Inverse of :func:`encode_legacy` (up to quantization)."""
    cfg = QuantConfig(stream.q)
    toks = stream.tokens
    pos = 0

    def peek(off=0):
        i = pos + off
        return toks[i] if i < len(toks) else None

    def need(*accepted, what):
        nonlocal pos
        t = peek()
        if t is None:
            raise TruncatedStream(pos, what, None)
        if t not in accepted:
            raise GrammarError(pos, what, t)
        pos += 1
        return t

    def value(kind=ValueKind.NV):
        nonlocal pos
        t = peek()
        if t is None:
            raise TruncatedStream(pos, "value", None)
        if not T.is_value_token(t, cfg):
            raise GrammarError(pos, "value", t)
        pos += 1
        return dequantize_value(t - T.VALUE_OFFSET, cfg, kind)

    for i, t in enumerate(toks):
        if not T.is_known_token(t, cfg):
            raise UnknownToken(i, t)
    steps = []
    while True:
        sketches = []
        need(T.SS, what="ss")
        while True:
            euler = (value(ValueKind.AG), value(ValueKind.AG), value(ValueKind.AG))
            origin = (value(), value(), value())
            profiles = []
            need(T.SP, what="sp")
            while True:
                loops = []
                need(T.SL, what="sl")
                while True:
                    curves = []
                    need(T.SX, what="sx")
                    while True:
                        pt = Point2(value(), value())
                        nxt = peek()
                        if nxt is not None and T.is_value_token(nxt, cfg):
                            if peek(1) in (T.OR_CW, T.OR_CCW):
                                sweep = value(ValueKind.AG)
                                curves.append(Arc(pt, sweep, T.orientation_of(need(T.OR_CW, T.OR_CCW, what="or"))))
                            else:
                                curves.append(Circle(pt, value()))
                        else:
                            curves.append(Line(pt))
                        if peek() != T.SX:
                            break
                        pos += 1
                    loops.append(Loop(tuple(curves)))
                    if peek() != T.SL:
                        break
                    pos += 1
                profiles.append(Profile(tuple(loops)))
                if peek() != T.SP:
                    break
                pos += 1
            frame = FrameSpec("Z+", Point2(0.0, 0.0), 0.0, 1.0)
            sketches.append(Sketch(Placement(origin, euler), frame, tuple(profiles)))
            if peek() != T.SS:
                break
            pos += 1
        need(T.SE, what="se")
        e_pos, e_neg = value(), value()
        op = T.boolean_of(need(*range(T.BO_BASE, T.VALUE_OFFSET), what="bo"))
        steps.append(EPart(tuple(sketches), Extrude(e_pos, e_neg, op)))
        if need(T.ES, T.EM, what="es/em") == T.EM:
            break
    if pos != len(toks):
        raise GrammarError(pos, "end of stream", toks[pos])
    return Program(tuple(steps), tuple(stream.origin), stream.size)
