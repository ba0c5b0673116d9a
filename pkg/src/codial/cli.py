"""Command-line interface.

``codial`` bundles the compiler, runtime, and evaluation tooling behind
subcommands.  Exit codes: 0 on success, 1 when diagnostics or runtime
errors occur, 2 on usage mistakes (argparse's default).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .backend import (
    FnBackend,
    HttpBackend,
    ScriptedBackend,
    load_backend_config,
)
from .chief import parse_chief, validate_chief
from .colang import emit_colang
from .compiler import compile_graph, lint
from .errors import CodialError, MalformedDocument
from .evaluation import evaluate, load_dialogues
from .gcg import assemble_gcg_prompt, llm_generate_code
from .ir import GuardrailProgram, parse_program, serialize_program
from .promptopt import load_dst_samples, optimize_dst
from .runtime import initial_state, run_turn


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise MalformedDocument(f"cannot read {path}: {exc}") from exc


def _load_graph(path: str):
    return parse_chief(_read(path))


def _load_program(path: str) -> GuardrailProgram:
    """Accept either a flow document (compiled on the fly) or a program file."""
    text = _read(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON in {path}: {exc}") from exc
    if isinstance(data, dict) and "nap" in data:
        return parse_program(text)
    return compile_graph(parse_chief(text))


def _write_output(text: str, output: str | None) -> None:
    if output and output != "-":
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _mock_backend(program: GuardrailProgram) -> FnBackend:
    """Canned answers: slots stay empty, conditions read as "no", no global
    intent fires, and a stuck policy falls back to its default action."""
    default = program.fallback.default_action

    def fn(request):
        return {
            "value_from_instruction": "null",
            "boolean_nld": "no",
            "intent": "none",
            "fallback_choice": default,
        }.get(request.purpose, "")

    return FnBackend(fn)


def _make_backend(args, program: GuardrailProgram | None = None):
    if getattr(args, "script", None):
        return ScriptedBackend(json.loads(_read(args.script)))
    if getattr(args, "backend", "mock") == "http":
        return HttpBackend(load_backend_config(getattr(args, "config", None)))
    assert program is not None
    return _mock_backend(program)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    diagnostics = validate_chief(_load_graph(args.flow))
    for diag in diagnostics:
        print(diag, file=sys.stderr)
    return 1 if any(d.severity == "error" for d in diagnostics) else 0


def cmd_compile(args) -> int:
    program = compile_graph(_load_graph(args.flow))
    _write_output(serialize_program(program), args.output)
    return 0


def cmd_emit_colang(args) -> int:
    _write_output(emit_colang(_load_program(args.source)), args.output)
    return 0


def cmd_lint(args) -> int:
    program = parse_program(_read(args.ir))
    findings = lint(program, _load_graph(args.flow))
    for finding in findings:
        where = finding.node_id or finding.slot or "program"
        print(f"{finding.rule} {finding.severity} {where}: {finding.message}",
              file=sys.stderr)
    return 1 if findings else 0


def cmd_gen_code(args) -> int:
    bundle = assemble_gcg_prompt(_load_graph(args.flow), args.paradigm)
    if args.script:
        backend = ScriptedBackend(json.loads(_read(args.script)))
    else:
        backend = HttpBackend(load_backend_config(args.config))
    code, attempts = llm_generate_code(bundle, backend)
    print(f"generated after {attempts} attempt(s)", file=sys.stderr)
    _write_output(code if code.endswith("\n") else code + "\n", args.output)
    return 0


def cmd_chat(args) -> int:
    program = _load_program(args.source)
    backend = _make_backend(args, program)
    state = initial_state(program)
    while True:
        print("you: ", end="", file=sys.stderr, flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        text = line.strip()
        if not text:
            continue
        if text in ("/quit", "/exit"):
            break
        result = run_turn(program, state, text, backend)
        state = result.state
        print(f"agent: {result.utterance}")
        if args.show_state:
            for name, value in state.variables.items():
                print(f"  {name} = {value!r}")
        if args.show_trace:
            for entry in result.trace:
                print(f"  # {json.dumps(entry)}")
    print(file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    program = _load_program(args.source)
    backend = _make_backend(args, program)
    app = build_app(program, backend,
                    transcript_dir=args.transcript_dir,
                    cors_origins=args.cors_origin,
                    resume=args.resume)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_eval(args) -> int:
    program = _load_program(args.source)
    dialogues = load_dialogues(args.data)
    backend = _make_backend(args, program)
    report = evaluate(program, dialogues, backend,
                      oracle_state=args.oracle_state)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_optimize_dst(args) -> int:
    program = _load_program(args.source)
    entries = {entry.slot: entry for entry in program.dst}
    if args.slot not in entries:
        known = ", ".join(sorted(entries)) or "none"
        print(f"error: unknown slot '{args.slot}' (known: {known})",
              file=sys.stderr)
        return 1
    entry = entries[args.slot]
    if args.instruction:
        entry = dataclasses.replace(
            entry, instruction=_read(args.instruction).strip())
    dataset = load_dst_samples(args.data)
    backend = _make_backend(args, program)
    run = optimize_dst(entry, dataset, backend, backend, seed=args.seed)
    print(json.dumps(run.to_dict(), indent=2))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["mock", "http"], default="mock",
                        help="mock: canned deterministic answers; http: "
                             "configured chat-completions endpoint")
    parser.add_argument("--script",
                        help="JSON file of scripted backend steps "
                             "(overrides --backend)")
    parser.add_argument("--config", help="backend config file (TOML or JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codial",
        description="Compile dialogue flows into guardrail programs, run "
                    "them, and score them.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a flow document")
    p.add_argument("flow")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="compile a flow into its program")
    p.add_argument("flow")
    p.add_argument("-o", "--output", help="destination file (default stdout)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("emit-colang",
                       help="render a flow or program as Colang-style code")
    p.add_argument("source", help="flow document or compiled program")
    p.add_argument("-o", "--output", help="destination file (default stdout)")
    p.set_defaults(func=cmd_emit_colang)

    p = sub.add_parser("lint", help="check a program against its flow")
    p.add_argument("ir", help="compiled program file")
    p.add_argument("--flow", required=True, help="flow document to check against")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("gen-code", help="generate a program with an LLM")
    p.add_argument("flow")
    p.add_argument("--paradigm", choices=["free", "structured"],
                   default="structured")
    p.add_argument("--script", help="JSON file of scripted backend steps")
    p.add_argument("--config", help="backend config file (TOML or JSON)")
    p.add_argument("-o", "--output", help="destination file (default stdout)")
    p.set_defaults(func=cmd_gen_code)

    p = sub.add_parser("chat", help="interactive conversation on stdin/stdout")
    p.add_argument("source", help="flow document or compiled program")
    _backend_flags(p)
    p.add_argument("--show-state", action="store_true",
                   help="print the variable table after each turn")
    p.add_argument("--show-trace", action="store_true",
                   help="print per-turn decision traces")
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve", help="host conversations over HTTP")
    p.add_argument("source", help="flow document or compiled program")
    _backend_flags(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--cors-origin", action="append", default=[],
                   help="allowed browser origin (repeatable)")
    p.add_argument("--transcript-dir", help="directory for JSONL transcripts")
    p.add_argument("--resume", action="store_true",
                   help="rebuild sessions from existing transcripts")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval",
                       help="score a program against reference dialogues")
    p.add_argument("source", help="flow document or compiled program")
    p.add_argument("--data", required=True, help="JSONL dialogue file")
    p.add_argument("--oracle-state", action="store_true",
                   help="overwrite tracked slots with labeled gold states")
    _backend_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("optimize-dst",
                       help="hill-climb one slot-tracking instruction")
    p.add_argument("source", help="flow document or compiled program")
    p.add_argument("--slot", required=True)
    p.add_argument("--data", required=True, help="JSONL sample file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instruction",
                   help="file with a replacement starting instruction")
    _backend_flags(p)
    p.set_defaults(func=cmd_optimize_dst)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CodialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
