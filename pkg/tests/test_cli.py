import json

import pytest

from pointercad.cli import EXIT_DECODE, EXIT_GRAMMAR, EXIT_KERNEL, EXIT_OK, EXIT_POINTER, exit_code, main
from pointercad.codec import encode, save_stream
from pointercad.errors import EmptyResult, NoCandidates, TrailingTokens, TruncatedStream, UnknownToken, ValidationFailed
from pointercad.grammar import program_to_dict
from pointercad.tokens import QuantConfig

from progs import cube_with_hole, unit_cube_program


@pytest.fixture()
def cube_files(tmp_path):
    prog = tmp_path / "cube.program.json"
    prog.write_text(json.dumps(program_to_dict(unit_cube_program())))
    stream = tmp_path / "cube.json"
    save_stream(encode(unit_cube_program(), QuantConfig(8)), stream)
    return prog, stream


def test_exit_code_mapping():
    assert exit_code(TruncatedStream(5, "se")) == EXIT_DECODE
    assert exit_code(OSError()) == EXIT_DECODE
    assert exit_code(ValidationFailed([])) == EXIT_GRAMMAR
    assert exit_code(TrailingTokens(3, "end of stream", 7)) == EXIT_GRAMMAR
    assert exit_code(NoCandidates("x")) == EXIT_POINTER
    assert exit_code(EmptyResult("x")) == EXIT_KERNEL


def test_encode_decode_roundtrip(cube_files, tmp_path, capsys):
    prog, _ = cube_files
    out = tmp_path / "s.json"
    assert main(["encode", str(prog), "-o", str(out), "--q", "6"]) == EXIT_OK
    back = tmp_path / "p.json"
    assert main(["decode", str(out), "-o", str(back)]) == EXIT_OK
    # re-encoding a decoded program is lossless
    again, back2 = tmp_path / "s2.json", tmp_path / "p2.json"
    assert main(["encode", str(back), "-o", str(again), "--q", "6"]) == EXIT_OK
    assert again.read_text() == out.read_text()
    main(["decode", str(again), "-o", str(back2)])
    assert back2.read_text() == back.read_text()
    assert main(["encode", str(prog), "--legacy"]) == EXIT_OK
    assert '"tokens"' in capsys.readouterr().out


def test_build(cube_files, tmp_path, capsys):
    _, stream = cube_files
    stl, js = tmp_path / "c.stl", tmp_path / "c.brep.json"
    assert main(["build", str(stream), "--stl", str(stl), "--json", str(js)]) == EXIT_OK
    vol, rest = capsys.readouterr().out.split(", ", 1)
    assert float(vol.split()[1]) == pytest.approx(1.0, abs=5e-3)  # 8-bit quantization
    assert rest == "6 faces, 12 edges\n"
    assert stl.stat().st_size == 84 + 50 * 12
    assert main(["validate", str(stream)]) == EXIT_OK


def test_truncated_stream(cube_files, tmp_path):
    _, stream = cube_files
    doc = json.loads(stream.read_text())
    doc["tokens"] = doc["tokens"][:-3]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["build", str(bad)]) == EXIT_DECODE
    assert main(["build", str(tmp_path / "missing.json")]) == EXIT_DECODE
    (tmp_path / "junk.json").write_text("{")
    assert main(["decode", str(tmp_path / "junk.json")]) == EXIT_DECODE


def test_unresolvable_pointer(cube_files, tmp_path):
    _, stream = cube_files
    doc = json.loads(stream.read_text())
    doc["pointers"][0]["entity_ref"]["stable_id"] = "Bottom"
    bad = tmp_path / "ptr.json"
    bad.write_text(json.dumps(doc))
    assert main(["build", str(bad)]) == EXIT_POINTER


def test_gen_corpus_and_metrics(tmp_path, capsys):
    d = tmp_path / "corpus"
    assert main(["gen-corpus", str(d), "--n", "3", "--seed", "4"]) == EXIT_OK
    assert len(list(d.glob("*.stl"))) == 3
    capsys.readouterr()
    rep = tmp_path / "m.json"
    assert main(["metrics", str(d), str(d), "--n-samples", "512", "--json", str(rep)]) == EXIT_OK
    doc = json.loads(rep.read_text())
    agg = doc["aggregate"]
    assert agg["ir"] == 0.0 and agg["cd_median"] == 0.0
    assert all(r["cd"] == 0.0 for r in doc["models"])
    assert all(v == 1.0 for k, v in agg.items() if k.startswith("f1_"))


def test_metrics_counts_failed_prediction(tmp_path, capsys):
    gt, pred = tmp_path / "gt", tmp_path / "pred"
    gt.mkdir(), pred.mkdir()
    for name, prog in (("a", unit_cube_program()), ("b", cube_with_hole(0.5))):
        save_stream(encode(prog, QuantConfig(8)), gt / f"{name}.json")
        save_stream(encode(prog, QuantConfig(8)), pred / f"{name}.json")
    (pred / "b.json").write_text('{"tokens": [1, 2]}')
    assert main(["metrics", str(pred), str(gt), "--n-samples", "256"]) == EXIT_OK
    assert "#ir,0.5" in capsys.readouterr().out
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["metrics", str(empty), str(gt)]) == EXIT_DECODE


def test_quant_study(tmp_path, capsys):
    d = tmp_path / "corpus"
    main(["gen-corpus", str(d), "--n", "2", "--chamfer-prob", "0", "--fillet-prob", "0"])
    out = tmp_path / "study.csv"
    assert main(["quant-study", str(d), "--q-values", "6", "--n-samples", "256", "-o", str(out)]) == EXIT_OK
    assert out.read_text().startswith("codec,q,n,ir,median_cd\n")


def test_resolve(cube_files, capsys):
    _, stream = cube_files
    assert main(["resolve", str(stream)]) == EXIT_OK
    assert "face F1001 Top" in capsys.readouterr().out
    assert main(["resolve", str(stream), "--target", "F1002"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank,stable_id,kind,cosine,same_class" and lines[1].startswith("1,F1002,")
    assert main(["resolve", str(stream), "--target", "F42"]) == EXIT_POINTER


def test_gradcheck(capsys):
    assert main(["gradcheck", "--seed", "1"]) == EXIT_OK
    errs = [float(l.split()[-1]) for l in capsys.readouterr().out.splitlines()]
    assert len(errs) == 3 and max(errs) < 1e-4


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("POINTERCAD_SEED", "4")
    a, b = tmp_path / "a", tmp_path / "b"
    main(["gen-corpus", str(a), "--n", "1"])
    main(["gen-corpus", str(b), "--n", "1", "--seed", "4"])
    assert (a / "model_0000.json").read_text() == (b / "model_0000.json").read_text()
