import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointercad import tokens as T
from pointercad.codec import (
    LegacyStream,
    decode,
    decode_legacy,
    encode,
    encode_legacy,
    euler_zyx_from_matrix,
    load_stream,
    matrix_from_euler_zyx,
    save_stream,
    stream_from_json,
    stream_to_json,
)
from pointercad.errors import MalformedProgram, RangeError, TruncatedStream, UnknownToken, UnsupportedOperation
from pointercad.grammar import Chamfer, EPart, Extrude, FrameSpec, Point2, PointerRef, Program, Sketch, TokenStream
from pointercad.tokens import QuantConfig, dequantize_value, quantize_value

from progs import WORLD, random_program, rect_profile, unit_cube_program


# golden values copied by hand from the token definition table
GOLDEN_LABELS = {"em": 1, "es": 2, "ss": 3, "se": 4, "sc": 5, "sf": 6, "sp": 7, "sl": 8, "sx": 9, "pe": 10, "pd": 11}
GOLDEN_DIRECTIONS = {14: ("X+", "Y+"), 15: ("X-", "Z+"), 16: ("Y+", "Z+"), 17: ("Y-", "X+"), 18: ("Z+", "X+"), 19: ("Z-", "Y+")}


def test_label_ids():
    assert T.LABELS == GOLDEN_LABELS
    assert (T.OR_CW, T.OR_CCW) == (12, 13)
    assert [T.boolean_token(op) for op in ("New", "Join", "Cut", "Intersect")] == [20, 21, 22, 23]
    assert T.VALUE_OFFSET == 24


def test_direction_table():
    for sym, (primary, aux) in GOLDEN_DIRECTIONS.items():
        assert T.direction_token(primary) == sym
        assert T.direction_of(sym) == primary
        assert T.auxiliary_direction(primary) == aux


def test_value_tokens_follow_labels():
    cfg = QuantConfig(8)
    assert cfg.levels == 256 and cfg.vocab_size == 24 + 256
    assert not T.is_value_token(23, cfg) and T.is_value_token(24, cfg) and T.is_value_token(279, cfg)
    assert not T.is_known_token(0, cfg) and not T.is_known_token(280, cfg)


@pytest.mark.parametrize(
    "v, kind, expected",
    [(0.0, "nv", 0), (1.0, "nv", 255), (180.0, "ag", 128), (0.5, "nv", 128), (359.99, "ag", 255)],
)
def test_quantize_examples(v, kind, expected):
    assert quantize_value(v, QuantConfig(8), kind) == expected


def test_dequantize_examples():
    cfg = QuantConfig(8)
    assert dequantize_value(0, cfg) == 0.0
    assert dequantize_value(255, cfg) == 1.0
    assert dequantize_value(128, cfg, "ag") == pytest.approx(128 / 255 * 360, abs=1e-12)
    assert dequantize_value(128, cfg, "ag") == pytest.approx(180.7059, abs=1e-4)


@pytest.mark.parametrize("v, kind", [(-1e-9, "nv"), (1.0000001, "nv"), (float("nan"), "nv"), (-1.0, "ag"), (361.0, "ag")])
def test_quantize_out_of_range(v, kind):
    with pytest.raises(RangeError):
        quantize_value(v, QuantConfig(8), kind)


def test_dequantize_out_of_range():
    with pytest.raises(RangeError):
        dequantize_value(256, QuantConfig(8))
    with pytest.raises(RangeError):
        dequantize_value(-1, QuantConfig(8))


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(1, 16))
def test_half_bin_bound(v, q):
    cfg = QuantConfig(q)
    err = abs(dequantize_value(quantize_value(v, cfg), cfg) - v)
    assert err <= 1.0 / (2 * (2**q - 1)) + 1e-15


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([4, 6, 8, 10, 12]))
def test_round_trip_property(seed, q):
    p = random_program(np.random.default_rng(seed), q)
    s = encode(p, QuantConfig(q))
    assert decode(s) == p
    # pe positions and payload positions coincide
    assert {i for i, t in enumerate(s.tokens) if t == T.PE} == set(s.pointers)


def test_chamfer_prefix():
    edges = (PointerRef("edge", "F1000~F1001"), PointerRef("edge", "F1001~F1002"))
    base = unit_cube_program()
    p = Program(base.steps + (Chamfer(0.25, edges),), base.origin, base.size)
    toks = encode(p).tokens
    k = toks.index(T.ES) + 1
    assert toks[k : k + 4] == (5, 24 + quantize_value(0.25, QuantConfig()), 10, 10)
    assert toks[-1] == T.EM


def test_one_step_stream_shape():
    toks = encode(unit_cube_program()).tokens
    assert toks[:2] == (T.SS, T.PE)
    assert toks[-5] == T.SE and toks[-2] == T.boolean_token("New") and toks[-1] == T.EM
    assert T.ES not in toks


def test_empty_program():
    with pytest.raises(MalformedProgram):
        encode(Program(()))


def test_unrepresentable_value_carries_path():
    p = unit_cube_program()
    bad = EPart(p.steps[0].sketches, Extrude(1.5, 0.0, "New"))
    with pytest.raises(RangeError) as info:
        encode(Program((bad,), p.origin, p.size))
    assert "e_pos" in info.value.path


def test_unknown_and_truncated():
    s = encode(unit_cube_program())
    with pytest.raises(UnknownToken):
        decode(TokenStream((0,) + s.tokens[1:], {}, s.q))
    with pytest.raises(UnknownToken):
        decode(TokenStream(s.tokens[:-1] + (10_000,), s.pointers, s.q))
    with pytest.raises(TruncatedStream):
        decode(TokenStream(s.tokens[:-3], s.pointers, s.q))


def test_stream_json_round_trip(tmp_path):
    p = random_program(np.random.default_rng(3), 8)
    s = encode(p)
    assert stream_from_json(json.loads(json.dumps(stream_to_json(s)))) == s
    save_stream(s, tmp_path / "s.json")
    assert load_stream(tmp_path / "s.json") == s


def test_stream_json_pointer_step_index():
    edges = (PointerRef("edge", "F1000~F1001"),)
    base = unit_cube_program()
    p = Program(base.steps + (Chamfer(0.1, edges),), base.origin, base.size)
    doc = stream_to_json(encode(p))
    assert [e["entity_ref"]["step_index"] for e in doc["pointers"]] == [0, 1]


# ---------------------------------------------------------------------------
# legacy codec
# ---------------------------------------------------------------------------


def test_legacy_rejects_blends():
    base = unit_cube_program()
    p = Program(base.steps + (Chamfer(0.1, (PointerRef("edge", "F1000~F1001"),)),), base.origin, base.size)
    with pytest.raises(UnsupportedOperation):
        encode_legacy(p)


def test_legacy_has_no_pointer_states():
    s = encode_legacy(unit_cube_program())
    assert isinstance(s, LegacyStream)
    assert T.PE not in s.tokens and T.PD not in s.tokens


def test_legacy_round_trip_geometry():
    from pointercad.kernel.execute import execute_program

    o, L = WORLD
    sk = Sketch(PointerRef("base_plane", "Top"), FrameSpec("Z+", Point2(0.5, 0.5)), (rect_profile(0.0, 0.0, 0.5, 0.5),))
    p = Program((EPart((sk,), Extrude(0.5, 0.0, "New")),), o, L)
    for q in (6, 8):
        back = decode_legacy(encode_legacy(p, QuantConfig(q)))
        side = 2 * round(0.5 * (2**q - 1)) / (2**q - 1)  # 0.5 is off the grid for every q
        assert execute_program(back).final.volume == pytest.approx(side**3, rel=1e-9)


def test_legacy_identity_frame_bins():
    s = encode_legacy(unit_cube_program(), QuantConfig(8))
    # ss, then three angles at bin 0 and the translation of the world origin
    assert s.tokens[0] == T.SS
    assert s.tokens[1:4] == (24, 24, 24)
    assert s.tokens[4:7] == (24, 24, 24 + quantize_value(0.5, QuantConfig(8)))


@pytest.mark.parametrize("angles", [(0, 0, 0), (30, -20, 45), (90, 10, -170), (-45, 60, 5)])
def test_euler_zyx_round_trip(angles):
    R = matrix_from_euler_zyx(*angles)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.allclose(matrix_from_euler_zyx(*euler_zyx_from_matrix(R)), R, atol=1e-9)
