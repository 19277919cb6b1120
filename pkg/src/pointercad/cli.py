"""``pointercad`` command-line interface."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .codec import decode, decode_legacy, encode, encode_legacy, load_stream, save_stream, LegacyStream
from .errors import (
    DecodeError,
    GrammarError,
    MalformedProgram,
    NoCandidates,
    NonManifoldInput,
    PointerCADError,
    PointerResolutionFailed,
    RangeError,
    UnknownEntity,
    UnsupportedOperation,
    ValidationFailed,
)
from .grammar import Program, program_from_dict, program_to_dict, validate
from .kernel.execute import execute_program
from .kernel.meshio import dump_solid, load_mesh, write_stl
from .tokens import QuantConfig

EXIT_OK = 0
EXIT_DECODE = 2
EXIT_GRAMMAR = 3
EXIT_KERNEL = 4
EXIT_POINTER = 5


def exit_code(exc: BaseException) -> int:
    """Map a failure onto the documented exit codes."""
    if isinstance(exc, (DecodeError, OSError, json.JSONDecodeError, KeyError, TypeError)):
        return EXIT_DECODE
    if isinstance(exc, (GrammarError, ValidationFailed, MalformedProgram, RangeError, UnsupportedOperation)):
        return EXIT_GRAMMAR
    if isinstance(exc, (PointerResolutionFailed, NoCandidates, UnknownEntity, NonManifoldInput)):
        return EXIT_POINTER
    return EXIT_KERNEL


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("POINTERCAD_SEED", "0"))


def _fail(exc: BaseException) -> int:
    print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
    return exit_code(exc)


def read_program(path) -> Program:
    """A program from either a token-stream JSON or a program JSON."""
    doc = json.loads(Path(path).read_text())
    if "steps" in doc:
        return program_from_dict(doc)
    stream = load_stream(path)
    program = decode_legacy(stream) if isinstance(stream, LegacyStream) else decode(stream)
    diags = validate(program)
    if diags:
        raise ValidationFailed(diags)
    return program


def _write_json(doc, out):
    text = json.dumps(doc, indent=1)
    if out:
        Path(out).write_text(text)
    else:
        print(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_encode(args) -> int:
    program = program_from_dict(json.loads(Path(args.program).read_text()))
    cfg = QuantConfig(args.q)
    stream = encode_legacy(program, cfg) if args.legacy else encode(program, cfg)
    if args.output:
        save_stream(stream, args.output)
    else:
        from .codec import stream_to_json

        _write_json(stream.to_json() if args.legacy else stream_to_json(stream), None)
    return EXIT_OK


def cmd_decode(args) -> int:
    stream = load_stream(args.stream)
    program = decode_legacy(stream) if isinstance(stream, LegacyStream) else decode(stream)
    _write_json(program_to_dict(program), args.output)
    return EXIT_OK


def cmd_validate(args) -> int:
    program = read_program(args.input)
    print(f"ok: {len(program.steps)} steps")
    return EXIT_OK


def cmd_build(args) -> int:
    program = read_program(args.input)
    solid = execute_program(program, args.tess_segments).final
    if args.stl:
        write_stl(solid.mesh, args.stl)
    if args.json:
        dump_solid(solid, args.json)
    print(f"volume {solid.volume:.9g}, {len(solid.faces)} faces, {len(solid.edges)} edges")
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    from .corpus import CorpusSpec, write_corpus

    spec = CorpusSpec(
        n_models=args.n,
        max_steps=args.max_steps,
        min_steps=min(args.min_steps, args.max_steps),
        chamfer_prob=args.chamfer_prob,
        fillet_prob=args.fillet_prob,
        seed=_seed(args),
    )
    manifest = write_corpus(spec, args.out_dir, args.q)
    print(f"wrote {len(manifest['models'])} models to {args.out_dir}")
    return EXIT_OK


def _corpus_models(corpus_dir: Path, segments: int):
    for prog in sorted(corpus_dir.glob("*.program.json")):
        name = prog.name[: -len(".program.json")]
        program = program_from_dict(json.loads(prog.read_text()))
        yield name, program, execute_program(program, segments).final.mesh


def cmd_quant_study(args) -> int:
    from .study import QuantStudyConfig, run_study

    qs = tuple(args.q_values) if args.q_values else (4, 5, 6, 7, 8, 9, 10)
    cfg = QuantStudyConfig(q_values=qs, n_samples=args.n_samples, seed=_seed(args), segments=args.tess_segments)
    result = run_study(_corpus_models(Path(args.corpus_dir), args.tess_segments), cfg, args.jobs)
    text = result.to_csv()
    if args.output:
        Path(args.output).write_text(text)
    print(text, end="")
    return EXIT_OK


def _stream_files(d: Path) -> dict[str, Path]:
    return {
        p.name[: -len(".json")]: p
        for p in sorted(d.glob("*.json"))
        if not p.name.endswith(".program.json") and p.name != "manifest.json"
    }


def _try_build(path: Path, segments: int):
    try:
        program = read_program(path)
    except (PointerCADError, ValueError, KeyError, TypeError, OSError):
        return None, None
    try:
        return program, execute_program(program, segments).final.mesh
    except PointerCADError:
        return program, None


def cmd_metrics(args) -> int:
    from .metrics import PRIMITIVE_KINDS, MetricsReport, evaluate_model, extract_primitives, f1_from_counts, match_count

    pred, gt = _stream_files(Path(args.pred_dir)), _stream_files(Path(args.gt_dir))
    report = MetricsReport()
    tp = {k: 0 for k in PRIMITIVE_KINDS}
    n_pred = dict(tp)
    n_gt = dict(tp)
    seed = _seed(args)
    for idx, name in enumerate(sorted(gt)):
        if name not in pred:
            print(f"missing prediction for {name}", file=sys.stderr)
            continue
        gt_prog, gt_mesh = _try_build(gt[name], args.tess_segments)
        stl = gt[name].with_suffix(".stl")
        if gt_mesh is None and stl.exists():
            gt_mesh = load_mesh(stl)
        if gt_mesh is None:
            print(f"ground truth {name} does not build; skipped", file=sys.stderr)
            continue
        pred_prog, pred_mesh = _try_build(pred[name], args.tess_segments)
        report.rows.append(evaluate_model(name, pred_mesh, gt_mesh, args.n_samples, seed ^ idx, args.seg_thresh))
        gp = extract_primitives(gt_prog) if gt_prog is not None else {k: [] for k in PRIMITIVE_KINDS}
        pp = extract_primitives(pred_prog) if pred_prog is not None else {k: [] for k in PRIMITIVE_KINDS}
        for k in PRIMITIVE_KINDS:
            tp[k] += match_count(pp[k], gp[k], args.f1_tol)
            n_pred[k] += len(pp[k])
            n_gt[k] += len(gp[k])
    for name in sorted(set(pred) - set(gt)):
        print(f"missing ground truth for {name}", file=sys.stderr)
    if not report.rows:
        print("no aligned models", file=sys.stderr)
        return EXIT_DECODE
    report.f1 = {k: f1_from_counts(tp[k], n_pred[k], n_gt[k]) for k in PRIMITIVE_KINDS}
    text = report.to_csv()
    if args.output:
        Path(args.output).write_text(text)
    if args.json:
        Path(args.json).write_text(report.to_json())
    print(text, end="")
    return EXIT_OK


def _load_solid(path, segments: int):
    from .kernel.meshio import solid_from_dict

    doc = json.loads(Path(path).read_text())
    if "mesh" in doc and "faces" in doc:
        return solid_from_dict(doc)
    return execute_program(read_program(path), segments).final


def cmd_resolve(args) -> int:
    """Similarity-ranked candidate table for the embedding of ``--target``."""
    from .pointers import enumerate_candidates, resolve, similarities

    solid = _load_solid(args.input, args.tess_segments)
    cs = enumerate_candidates(solid, _seed(args))
    if args.target is None:
        for kind in ("face", "edge"):
            for cls in cs.classes(kind):
                print(kind, " ".join(cs.pool(kind)[i].stable_id for i in cls))
        return EXIT_OK
    kind, i = cs.find(args.target)
    pool = cs.pool(kind)
    sims = similarities(pool[i].embedding, cs, kind)
    members = set(cs.class_of(args.target))
    print("rank,stable_id,kind,cosine,same_class")
    for rank, j in enumerate(sorted(range(len(pool)), key=lambda j: -sims[j]), 1):
        c = pool[j]
        print(f"{rank},{c.stable_id},{c.kind},{sims[j]:.9f},{int(c.stable_id in members)}")
    hit = resolve(pool[i].embedding, cs, kind)
    return EXIT_OK if hit.stable_id in members else EXIT_POINTER


def cmd_gradcheck(args) -> int:
    from .neural import grad_check, label_value_grad, label_value_loss, pointer_loss_grad

    rng = np.random.default_rng(_seed(args))
    N = 8
    logits = rng.standard_normal(N)
    y = int(rng.integers(N))
    ev = grad_check(lambda z: (label_value_loss(z, y, 0.1), label_value_grad(z, y, 0.1)), logits, args.eps)
    C = rng.standard_normal((10, 16))
    p = rng.standard_normal(16)
    pos, neg = [0, 1, 2], list(range(3, 10))
    log_s = float(np.log(1 / 0.07))
    ep = grad_check(lambda x: pointer_loss_grad(x, C, pos, neg, log_s)[:2], p, args.eps)

    def by_log_s(x):
        loss, _, g = pointer_loss_grad(p, C, pos, neg, float(x[0]))
        return loss, np.array([g])

    es = grad_check(by_log_s, np.array([log_s]), args.eps)
    print(f"L_v        {ev:.3e}")
    print(f"L_p dp     {ep:.3e}")
    print(f"L_p dlog s {es:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $POINTERCAD_SEED, then 0)")
    common.add_argument("--q", type=int, default=8, help="quantization bits")
    common.add_argument("--tess-segments", type=int, default=64, help="segments per full circle")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    parser = argparse.ArgumentParser(prog="pointercad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[common], help="program JSON -> token stream")
    p.add_argument("program")
    p.add_argument("-o", "--output")
    p.add_argument("--legacy", action="store_true", help="use the absolute-coordinate codec")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="token stream -> program JSON")
    p.add_argument("stream")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("validate", parents=[common], help="decode and validate a sequence")
    p.add_argument("input")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", parents=[common], help="execute a sequence, write STL and B-rep JSON")
    p.add_argument("input")
    p.add_argument("--stl")
    p.add_argument("--json")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("gen-corpus", parents=[common], help="write a seeded program corpus")
    p.add_argument("out_dir")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--min-steps", type=int, default=2)
    p.add_argument("--max-steps", type=int, default=4)
    p.add_argument("--chamfer-prob", type=float, default=0.15)
    p.add_argument("--fillet-prob", type=float, default=0.15)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("quant-study", parents=[common], help="pointer vs legacy quantization error")
    p.add_argument("corpus_dir")
    p.add_argument("-o", "--output")
    p.add_argument("--q-values", type=int, nargs="+")
    p.add_argument("--n-samples", type=int, default=8192)
    p.set_defaults(func=cmd_quant_study)

    p = sub.add_parser("metrics", parents=[common], help="compare predicted and ground-truth sequences")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("-o", "--output")
    p.add_argument("--json")
    p.add_argument("--n-samples", type=int, default=8192)
    p.add_argument("--seg-thresh", type=float, default=30.0)
    p.add_argument("--f1-tol", type=float, default=1e-2)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("resolve", parents=[common], help="resolve a candidate's own embedding, or list classes")
    p.add_argument("input")
    p.add_argument("--target")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference loss gradients")
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # every failure maps onto a documented exit code
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
