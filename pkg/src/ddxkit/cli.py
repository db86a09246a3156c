"""Command-line entry point.

Subcommands: `kb validate`, `simulate`, `train`, `eval`, `predict`. Every
run writes a JSON manifest next to its primary output (or into the working
directory for commands without one) recording the resolved configuration,
seeds, paths, tool version, and wall-clock duration. All randomness is
controlled by --seed, so reruns with identical flags and inputs reproduce
identical output bytes; manifests are exempt (they carry timing).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .data import build_vocabulary, merge, read_cases_file, write_cases_file
from .evaluate import evaluate, expert_predictor, format_table, model_predictor
from .kb import parse_knowledge_base, validate_kb_document
from .model import init_parameters, load_checkpoint, save_checkpoint
from .simulate import SimConfig, simulate_dataset
from .train import TrainConfig, train


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: list[str]
    outputs: list[str]
    tool_version: str
    wall_clock_seconds: float


def _emit_manifest(command: str, args: argparse.Namespace, inputs: list[str], outputs: list[str], t0: float) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    manifest = RunManifest(
        command=command,
        config=config,
        seeds={"seed": getattr(args, "seed", None)},
        inputs=inputs,
        outputs=outputs,
        tool_version=__version__,
        wall_clock_seconds=time.monotonic() - t0,
    )
    out = getattr(args, "out", None)
    path = Path(f"{out}.manifest.json") if out else Path(f"{command.replace(' ', '-')}.manifest.json")
    path.write_text(json.dumps(asdict(manifest), indent=1, default=str) + "\n", encoding="utf-8")


def _parse_topk(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"--topk expects a comma-separated integer list, got {text!r}") from None
    if not ks:
        raise ValueError("--topk list is empty")
    return ks


def _read_restrict_findings(path: str) -> frozenset[str]:
    """A KB document (its finding ids are taken) or one finding id per line."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        kb = parse_knowledge_base(text)
        return frozenset(f.id for f in kb.findings)
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def _load_case_files(paths: list[str]):
    return merge([read_cases_file(p) for p in paths])


def cmd_kb_validate(args) -> int:
    t0 = time.monotonic()
    text = Path(args.kb_path).read_text(encoding="utf-8")
    report = validate_kb_document(text, min_clinical_findings=args.min_findings)
    lines = report.lines()
    body = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
    sys.stdout.write(body if body else "ok: knowledge base is valid\n")
    _emit_manifest("kb validate", args, [args.kb_path], [args.out] if args.out else [], t0)
    return 0 if report.ok else 1


def cmd_simulate(args) -> int:
    t0 = time.monotonic()
    kb = parse_knowledge_base(Path(args.kb).read_text(encoding="utf-8"))
    cfg = SimConfig(
        cases_total=args.cases,
        seed=args.seed,
        min_cases_per_disease=args.min_per_disease,
        ddx_top_k=args.ddx_top_k,
    )
    cases = simulate_dataset(kb, cfg, threads=args.threads)
    write_cases_file(cases, args.out)
    print(f"wrote {len(cases)} cases to {args.out}")
    _emit_manifest("simulate", args, [args.kb], [args.out], t0)
    return 0


def cmd_train(args) -> int:
    t0 = time.monotonic()
    cases = _load_case_files(args.cases)
    kb = parse_knowledge_base(Path(args.kb).read_text(encoding="utf-8")) if args.kb else None
    restrict = _read_restrict_findings(args.restrict_findings) if args.restrict_findings else None
    vocab = build_vocabulary([cases], kb=kb, restrict_to=restrict)
    params = init_parameters(vocab, dim=args.dim, seed=args.seed, kb=kb)
    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        dropout_rate=args.dropout,
        seed=args.seed,
    )
    trained, history = train(params, cases, cfg)
    save_checkpoint(trained, args.out)
    log_path = Path(f"{args.out}.log")
    log_path.write_text("".join(r.format_line() + "\n" for r in history), encoding="utf-8")
    for record in history:
        print(record.format_line())
    print(f"wrote checkpoint to {args.out}")
    _emit_manifest("train", args, list(args.cases) + ([args.kb] if args.kb else []), [args.out, str(log_path)], t0)
    return 0


def _make_predictor(args):
    inputs = []
    if args.engine == "model":
        if not args.model:
            raise ValueError("--engine model requires a checkpoint path argument")
        params = load_checkpoint(args.model)
        inputs.append(args.model)
        return model_predictor(params), params, inputs
    if not args.kb:
        raise ValueError("--engine expert requires --kb")
    kb = parse_knowledge_base(Path(args.kb).read_text(encoding="utf-8"))
    inputs.append(args.kb)
    k = args.ddx_top_k if args.ddx_top_k > 0 else None
    return expert_predictor(kb, top_k=k), None, inputs


def cmd_eval(args) -> int:
    t0 = time.monotonic()
    predictor, _, inputs = _make_predictor(args)
    cases = _load_case_files(args.cases)
    report = evaluate(
        predictor,
        cases,
        ks=_parse_topk(args.topk),
        target=args.target_disease,
        truth=args.truth,
        threads=args.threads,
    )
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    name = args.model if args.engine == "model" else "expert"
    print(format_table({name: report}))
    if report.target_accuracy is not None:
        print(f"\ntarget disease: {report.target_disease}")
        print(format_table({name: report}, metric="target_accuracy"))
    if report.skipped_findings:
        print(f"\nskipped {report.skipped_findings} out-of-vocabulary findings")
    _emit_manifest("eval", args, inputs + list(args.cases), [args.out] if args.out else [], t0)
    return 0


def cmd_predict(args) -> int:
    t0 = time.monotonic()
    predictor, _, inputs = _make_predictor(args)
    cases = _load_case_files(args.cases)
    depth = args.ddx_top_k if args.ddx_top_k > 0 else None
    lines = []
    for case in cases:
        ranked, skipped = predictor(case.pos, case.neg)
        if depth is not None:
            ranked = ranked[:depth]
        lines.append(
            json.dumps(
                {
                    "id": case.id,
                    "prediction": [{"disease": d, "p": p} for d, p in ranked],
                    "skipped_findings": skipped,
                },
                separators=(",", ":"),
            )
        )
    body = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    _emit_manifest("predict", args, inputs + list(args.cases), [args.out] if args.out else [], t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddx", description="Differential-diagnosis toolkit")
    parser.add_argument("--version", action="version", version=f"ddx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_kb = sub.add_parser("kb", help="knowledge base utilities")
    kb_sub = p_kb.add_subparsers(dest="kb_command", required=True)
    p_val = kb_sub.add_parser("validate", help="validate a KB document")
    p_val.add_argument("kb_path", help="knowledge base JSON document")
    p_val.add_argument("--out", default=None, help="write the report to this file")
    p_val.add_argument("--min-findings", type=int, default=3, help="warn threshold for nonzero clinical findings")
    p_val.set_defaults(func=cmd_kb_validate)

    p_sim = sub.add_parser("simulate", help="generate labeled cases from a KB")
    p_sim.add_argument("--kb", required=True, help="knowledge base JSON document")
    p_sim.add_argument("--cases", type=int, required=True, help="total number of cases")
    p_sim.add_argument("--min-per-disease", type=int, default=50, help="per-disease case floor")
    p_sim.add_argument("--ddx-top-k", type=int, default=5, help="differential size kept by the expert engine")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--out", required=True, help="output case file (jsonl)")
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train", help="train the diagnosis model")
    p_train.add_argument("--cases", nargs="+", action="extend", required=True, help="case files (repeatable)")
    p_train.add_argument("--kb", default=None, help="KB for vocabulary widening and demographic masks")
    p_train.add_argument(
        "--restrict-findings", default=None, help="KB document or finding-id list; limits the finding vocabulary"
    )
    p_train.add_argument("--dim", type=int, default=1024, help="embedding dimension")
    p_train.add_argument("--dropout", type=float, default=0.7)
    p_train.add_argument("--lr", type=float, default=0.01)
    p_train.add_argument("--epochs", type=int, default=15)
    p_train.add_argument("--batch", type=int, default=512)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.set_defaults(func=cmd_train)

    for name, fn, help_text in (
        ("eval", cmd_eval, "evaluate a diagnoser on labeled cases"),
        ("predict", cmd_predict, "rank diseases for each case"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("model", nargs="?", default=None, help="model checkpoint (for --engine model)")
        p.add_argument("--engine", choices=("model", "expert"), default="model")
        p.add_argument("--kb", default=None, help="knowledge base (for --engine expert)")
        p.add_argument("--cases", nargs="+", action="extend", required=True, help="case files (repeatable)")
        p.add_argument("--ddx-top-k", type=int, default=5, help="ranking depth; 0 ranks every disease")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default=None)
        if name == "eval":
            p.add_argument("--topk", default="1,3,5", help="comma-separated accuracy depths")
            p.add_argument("--truth", choices=("argmax", "seed-disease"), default="argmax")
            p.add_argument("--target-disease", default=None, help="also report this disease's in-top-k rate")
        p.set_defaults(func=fn)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as e:
        message = e.args[0] if e.args else e
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
