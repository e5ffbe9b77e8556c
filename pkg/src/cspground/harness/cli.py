"""Command line entry point: ``cspground <command> ...``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 solver or LLM failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..geometry import Thresholds
from ..llm_gateway import LlmConfig, LlmError, generate_program
from ..program import LoweringError, ProgramError, lower, parse, registry_signatures
from ..scene import SceneError, dump_scene, load_scene_file
from ..solver import Engine, Heuristic, SolverConfig, Status
from .evaluate import EvaluationError, Mode, SceneStore, evaluate, ground_text, load_records, scene_labels, write_report
from .synth import SynthError, load_spec, synth_scene

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAILURE = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--near", type=float)
    p.add_argument("--far", type=float)
    p.add_argument("--above-below-horizontal", type=float)
    p.add_argument("--between", type=float)
    p.add_argument("--heuristic", choices=[h.value for h in Heuristic])
    p.add_argument("--seed", type=int)
    p.add_argument("--engine", choices=[e.value for e in Engine])
    p.add_argument("--no-minmax", action="store_true", default=None)
    p.add_argument("--max-solutions", type=int)


def _add_llm_flags(p: argparse.ArgumentParser):
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--api-key-env")
    p.add_argument("--timeout", type=float)
    p.add_argument("--audit-log")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cspground", description="Ground referring expressions in 3D scenes by CSP solving.")
    parser.add_argument("--config", help="JSON object with flag defaults (keys use underscores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="parse and lower a program in strict mode")
    p.add_argument("program")

    p = sub.add_parser("solve", help="ground a program in a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--program", required=True)
    p.add_argument("--out")
    _add_solver_flags(p)

    p = sub.add_parser("gen", help="generate a program with the LLM")
    p.add_argument("--query", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--labels", nargs="+")
    p.add_argument("--out")
    _add_llm_flags(p)

    p = sub.add_parser("eval", help="evaluate a query file")
    p.add_argument("--scenes", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p.add_argument("--programs")
    p.add_argument("--llm", action="store_true", default=None)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    _add_solver_flags(p)
    _add_llm_flags(p)

    sub.add_parser("signatures", help="print the predefined function signatures")

    p = sub.add_parser("synth", help="write a synthetic scene document")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.add_argument("--program-out")
    return parser


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if not args.config:
        return args
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, "config", f"cannot read config: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(EXIT_DATA, "config", "config must be a JSON object")
    for key, value in doc.items():
        key = key.replace("-", "_")
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    return args


def solver_config(args) -> SolverConfig:
    base = Thresholds()
    th = Thresholds(
        args.near if args.near is not None else base.near_distance,
        args.far if args.far is not None else base.far_distance,
        args.above_below_horizontal if args.above_below_horizontal is not None else base.above_below_horizontal_distance,
        args.between if args.between is not None else base.between_distance,
    )
    heuristic = Heuristic(args.heuristic or Heuristic.MIN_AVG_DISTANCE.value)
    seed = args.seed
    if heuristic is Heuristic.RANDOM and seed is None:
        seed = 0
    return SolverConfig(
        thresholds=th,
        heuristic=heuristic,
        seed=seed,
        engine=Engine(args.engine or Engine.GLOBAL.value),
        minmax_enabled=not args.no_minmax,
        max_solutions=args.max_solutions or 100_000,
    )


def llm_config(args) -> LlmConfig:
    if not args.endpoint:
        raise CliError(EXIT_USAGE, "usage", "--endpoint is required for LLM generation")
    kw = {"endpoint_url": args.endpoint}
    for flag, key in (("model", "model_name"), ("temperature", "temperature"), ("max_tokens", "max_output_tokens"),
                      ("api_key_env", "api_key_env"), ("timeout", "timeout"), ("audit_log", "audit_log")):
        if getattr(args, flag) is not None:
            kw[key] = getattr(args, flag)
    try:
        return LlmConfig(**kw)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "usage", str(exc)) from exc


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_DATA, "io", str(exc)) from exc


def _load_scene(path: str):
    try:
        return load_scene_file(path)
    except OSError as exc:
        raise CliError(EXIT_DATA, "io", str(exc)) from exc
    except SceneError as exc:
        raise CliError(EXIT_DATA, "scene", str(exc)) from exc


def cmd_check(args) -> int:
    text = _read(args.program)
    try:
        _, diags = lower(parse(text), strict=True)
    except LoweringError as exc:
        diags = exc.diagnostics
    except ProgramError as exc:
        print(str(exc))
        return EXIT_DATA
    for d in diags:
        print(d)
    return EXIT_OK if not diags else EXIT_DATA


def cmd_solve(args) -> int:
    scene = _load_scene(args.scene)
    result = ground_text(_read(args.program), scene, solver_config(args))
    _emit(_dump(result.to_dict()), args.out)
    if result.status is Status.INVALID_PROGRAM:
        return EXIT_DATA
    return EXIT_OK if result.solved else EXIT_FAILURE


def cmd_gen(args) -> int:
    scene = _load_scene(args.scene)
    labels = args.labels or scene_labels(scene)
    try:
        program = generate_program(llm_config(args), args.query, labels)
    except LlmError as exc:
        raise CliError(EXIT_FAILURE, "llm", str(exc)) from exc
    _emit(program + "\n", args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        records = load_records(args.queries)
    except OSError as exc:
        raise CliError(EXIT_DATA, "io", str(exc)) from exc
    except EvaluationError as exc:
        raise CliError(EXIT_DATA, "data", str(exc)) from exc
    if not records:
        raise CliError(EXIT_DATA, "data", "no records")
    llm = llm_config(args) if args.llm else None
    try:
        report, rows = evaluate(records, SceneStore(args.scenes), solver_config(args),
                                Mode(args.mode or Mode.BBOX.value), args.programs, llm, args.jobs or 1)
    except EvaluationError as exc:
        raise CliError(EXIT_DATA, "data", str(exc)) from exc
    if args.out:
        write_report(report, rows, args.out)
    else:
        sys.stdout.write(_dump(report.to_dict()))
    return EXIT_OK


def cmd_signatures(args) -> int:
    sys.stdout.write(registry_signatures() + "\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        result = synth_scene(args.seed, load_spec(args.spec))
    except OSError as exc:
        raise CliError(EXIT_DATA, "io", str(exc)) from exc
    except (SynthError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, "synth", str(exc)) from exc
    _emit(dump_scene(result.scene) + "\n", args.out)
    if args.program_out:
        Path(args.program_out).write_text(result.program, encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check, "solve": cmd_solve, "gen": cmd_gen, "eval": cmd_eval,
    "signatures": cmd_signatures, "synth": cmd_synth,
}


def main(argv=None) -> int:
    try:
        args = _apply_config(build_parser().parse_args(argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return COMMANDS[args.command](args)
    except CliError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc), "exit_code": exc.code}) + "\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
