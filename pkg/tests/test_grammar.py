from dataclasses import replace

import numpy as np
import pytest

from pointercad import tokens as T
from pointercad.errors import GrammarError, MissingTerminator, TrailingTokens, TruncatedStream, ValidationFailed
from pointercad.grammar import (
    Arc,
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
    iter_pointers,
    parse,
    program_from_dict,
    program_to_dict,
    serialize,
    validate,
)

from progs import random_program, rect_profile, unit_cube_program


def codes(program):
    return {d.code for d in validate(program)}


def with_loop(loop: Loop) -> Program:
    p = unit_cube_program()
    sk = replace(p.steps[0].sketches[0], profiles=(Profile((loop,)),))
    return replace(p, steps=(replace(p.steps[0], sketches=(sk,)),))


def test_valid_cube():
    assert validate(unit_cube_program()) == []


def test_first_step_must_be_new():
    p = unit_cube_program()
    step = replace(p.steps[0], extrude=Extrude(0.5, 0.0, "Join"))
    assert "FirstStepNotNew" in codes(replace(p, steps=(step,)))
    assert "FirstStepNotNew" in codes(replace(p, steps=(Fillet(0.1, (PointerRef("edge", "F1~F2"),)),)))


def test_loop_rules():
    assert "MixedCircleLoop" in codes(with_loop(Loop((Circle(Point2(0.5, 0.5), 0.1), Line(Point2(0, 0))))))
    assert "ClosureViolation" in codes(with_loop(Loop((Line(Point2(0, 0)),))))
    assert "ClosureViolation" in codes(with_loop(Loop((Line(Point2(0, 0)), Line(Point2(0, 0)), Line(Point2(1, 1))))))
    assert "SweepOutOfRange" in codes(with_loop(Loop((Arc(Point2(0, 0), 360.0), Line(Point2(1, 0))))))
    assert "DegeneratePrimitive" in codes(with_loop(Loop((Circle(Point2(0.5, 0.5), 0.0),))))
    assert "EmptyLoop" in codes(with_loop(Loop(())))
    # two points and an arc close a lens; that is fine
    assert codes(with_loop(Loop((Arc(Point2(0, 0), 90.0), Line(Point2(1, 0)))))) == set()


def test_value_ranges():
    p = unit_cube_program()
    sk = p.steps[0].sketches[0]
    for frame in (replace(sk.frame, scale=0.0), replace(sk.frame, scale=2.5), replace(sk.frame, rotation=360.0)):
        bad = replace(p, steps=(replace(p.steps[0], sketches=(replace(sk, frame=frame),)),))
        assert "ValueOutOfRange" in codes(bad)
    zero = replace(p, steps=(replace(p.steps[0], extrude=Extrude(0.0, 0.0, "New")),))
    assert "ZeroExtrusion" in codes(zero)


def test_pointer_kinds():
    p = unit_cube_program()
    sk = replace(p.steps[0].sketches[0], plane=PointerRef("edge", "F1~F2"))
    assert "BadPointerKind" in codes(replace(p, steps=(replace(p.steps[0], sketches=(sk,)),)))
    blend = Fillet(0.1, (PointerRef("face", "F1000"),))
    assert "BadPointerKind" in codes(replace(p, steps=p.steps + (blend,)))
    assert "EmptyEdgeSet" in codes(replace(p, steps=p.steps + (Fillet(0.1, ()),)))
    many = Fillet(0.1, tuple(PointerRef("edge", f"F{i}~F{i + 1}") for i in range(65)))
    assert "TooManyEdges" in codes(replace(p, steps=p.steps + (many,)))


def test_empty_program():
    assert "EmptyProgram" in codes(Program(()))


def test_serialize_refuses_invalid():
    with pytest.raises(ValidationFailed) as info:
        serialize(with_loop(Loop((Line(Point2(0, 0)),))))
    assert info.value.diagnostics[0].code == "ClosureViolation"


@pytest.mark.parametrize("q", [4, 8, 12])
def test_parse_serialize_round_trip(q):
    rng = np.random.default_rng(q)
    from pointercad.tokens import QuantConfig

    for _ in range(50):
        p = random_program(rng, q)
        assert parse(serialize(p, QuantConfig(q))) == p


def test_missing_terminator():
    s = serialize(unit_cube_program())
    toks = s.tokens[:-1] + (T.ES,)
    with pytest.raises(MissingTerminator):
        parse(TokenStream(toks, s.pointers, s.q))


def test_trailing_tokens():
    s = serialize(unit_cube_program())
    with pytest.raises(TrailingTokens):
        parse(TokenStream(s.tokens + (T.SS,), s.pointers, s.q))


def test_grammar_error_position():
    s = serialize(unit_cube_program())
    toks = list(s.tokens)
    toks[2] = T.SP  # a direction token is expected after the plane pointer
    with pytest.raises(GrammarError) as info:
        parse(TokenStream(tuple(toks), s.pointers, s.q))
    assert info.value.position == 2
    assert not isinstance(info.value, TruncatedStream)


def test_pe_without_payload():
    s = serialize(unit_cube_program())
    with pytest.raises(GrammarError):
        parse(TokenStream(s.tokens, {}, s.q))


def test_too_many_edge_pointers():
    from pointercad.tokens import QuantConfig

    toks = list(serialize(unit_cube_program()).tokens)
    toks[-1] = T.ES
    ptrs = {1: PointerRef("base_plane", "Top")}
    toks += [T.SF, T.VALUE_OFFSET + 10]
    for _ in range(65):
        ptrs[len(toks)] = PointerRef("edge", "F1~F2")
        toks.append(T.PE)
    toks.append(T.EM)
    with pytest.raises(GrammarError):
        parse(TokenStream(tuple(toks), ptrs, QuantConfig().q))


def test_dict_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(30):
        p = random_program(rng, 8)
        assert program_from_dict(program_to_dict(p)) == p


def test_iter_pointers_order():
    o = (0.0, 0.0, 0.0)
    plane = PointerRef("face", "F1000")
    snap = PointerRef("edge", "F1000~F1001")
    sk = Sketch(plane, FrameSpec("Z+", Point2(0, 0, snap)), (rect_profile(0, 0, 1, 1),))
    p = Program((EPart((sk,), Extrude(0.1, 0.0, "New")), Fillet(0.1, (snap,))), o, 1.0)
    assert list(iter_pointers(p)) == [(0, plane), (0, snap), (1, snap)]
