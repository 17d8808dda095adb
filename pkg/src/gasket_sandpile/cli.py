"""Command-line interface: ``gasket-sandpile <command> ...``.

Exit codes: 0 on success, 1 when a verification fails, 2 on usage or input
errors (each reported as a single line on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import engine, integrals
from .constructions import ConstructionError, ValueMap, as_number, assemble_identity, value_map
from .gasket import GasketError, SinkSpec, build_gasket, parse_word
from .render import RenderError, RenderSpec, render

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- file helpers ------------------------------------------------------------------


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(obj, dict) or "level" not in obj:
        raise UsageError(f"{path}: expected an object with a 'level' field")
    return obj


def load_config(path) -> engine.SandpileConfig:
    obj = read_json(path)
    if "heights" not in obj:
        raise UsageError(f"{path}: not a sandpile configuration (missing 'heights')")
    graph = build_gasket(int(obj["level"]), obj.get("sink", "normal"))
    return engine.SandpileConfig(graph, np.asarray(obj["heights"], dtype=np.int64))


def load_view(path) -> integrals.ContinuationView:
    """A configuration (``heights``) or a value map (``values``)."""
    obj = read_json(path)
    if "heights" in obj:
        return integrals.ContinuationView.of(load_config(path))
    if "values" in obj:
        if obj.get("sink", "normal") != "normal":
            raise UsageError(f"{path}: value maps live on normal-boundary graphs")
        return integrals.ContinuationView.of(value_map(int(obj["level"]), obj["values"]))
    raise UsageError(f"{path}: expected 'heights' or 'values'")


def parse_levels(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        a, b = int(lo), int(hi if sep else lo)
    except ValueError:
        raise UsageError(f"levels must look like A..B, got {text!r}") from None
    if a > b:
        raise UsageError(f"empty level range {text!r}")
    return range(a, b + 1)


def parse_params(text: str) -> tuple:
    if not text:
        return ()
    try:
        return tuple(as_number(s.strip()) for s in text.split(","))
    except (ValueError, ZeroDivisionError, ConstructionError):
        raise UsageError(f"parameters must be comma-separated numbers, got {text!r}") from None


def parse_cell(text: str) -> tuple[int, ...]:
    try:
        return parse_word(text)
    except GasketError as exc:
        raise UsageError(str(exc)) from None


# -- commands ------------------------------------------------------------------------


def cmd_build(args, out) -> int:
    write_json(args.out, build_gasket(args.level, args.sink).to_json())
    return EXIT_OK


def cmd_identity(args, out) -> int:
    try:
        ident = engine.identity(build_gasket(args.level, args.sink), verify=not args.no_verify)
    except engine.VerificationError as exc:
        print(f"FAIL: {exc}", file=out)
        return EXIT_FAIL
    write_json(args.out, ident.to_json())
    return EXIT_OK


def cmd_verify_structure(args, out) -> int:
    status = EXIT_OK
    for m in parse_levels(args.levels):
        if m < 2:
            raise UsageError("verify-structure needs levels >= 2")
        engine_id = engine.identity(build_gasket(m), verify=False)
        ok = np.array_equal(engine_id.heights, assemble_identity(m).values)
        print(f"level {m}: {'PASS' if ok else 'FAIL'}", file=out)
        status = status if ok else EXIT_FAIL
    return status


def cmd_integrate(args, out) -> int:
    view = load_view(args.config)
    value = integrals.cell_integral(view, parse_cell(args.cell))
    if args.exact:
        print(f"{value.numerator}/{value.denominator}", file=out)
    else:
        print(integrals.decimal_string(value), file=out)
    return EXIT_OK


def cmd_converge(args, out) -> int:
    rows = integrals.convergence_table(args.family, parse_cell(args.cell), parse_levels(args.levels), parse_params(args.params))
    text = integrals.rows_to_csv(rows) if args.format == "csv" else integrals.rows_to_json(rows)
    out.write(text)
    return EXIT_OK


def cmd_burn(args, out) -> int:
    report = engine.is_recurrent(load_config(args.config))
    print(f"recurrent: {str(report.recurrent).lower()}", file=out)
    print("burn order: " + " ".join(map(str, report.burn_order)), file=out)
    return EXIT_OK


def cmd_add(args, out) -> int:
    a, b = load_config(args.a), load_config(args.b)
    write_json(args.out, engine.group_add(a, b).to_json())
    return EXIT_OK


def cmd_render(args, out) -> int:
    view = load_view(args.config)
    data = render(view, RenderSpec(format=args.format, width=args.width, radius=args.radius))
    Path(args.out).write_bytes(data)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gasket-sandpile", description="Sandpile identities on Sierpinski gasket graphs.")
    sub = parser.add_subparsers(dest="command", required=True)
    sinks = [s.value for s in SinkSpec]

    p = sub.add_parser("build", help="write the graph SG_N as JSON")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--sink", choices=sinks, default="normal")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("identity", help="compute the sandpile identity")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--sink", choices=sinks, default="normal")
    p.add_argument("--out", required=True)
    p.add_argument("--no-verify", action="store_true", help="skip the neutrality and burning checks")
    p.set_defaults(func=cmd_identity)

    p = sub.add_parser("verify-structure", help="compare engine identities with the block assembly")
    p.add_argument("--levels", required=True, help="range A..B")
    p.set_defaults(func=cmd_verify_structure)

    p = sub.add_parser("integrate", help="integral of the continuation over a cell")
    p.add_argument("--config", required=True)
    p.add_argument("--cell", default="", help="digit string, empty for the whole gasket")
    p.add_argument("--exact", action="store_true", help="print num/den instead of a decimal")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("converge", help="table of cell integrals across levels")
    p.add_argument("--family", choices=integrals.FAMILIES, required=True)
    p.add_argument("--params", default="", help="comma-separated, e.g. 1,2,3,0,0,0")
    p.add_argument("--levels", required=True, help="range A..B")
    p.add_argument("--cell", default="")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("burn", help="burning test for recurrence")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_burn)

    p = sub.add_parser("add", help="group sum of two configurations")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_add)

    p = sub.add_parser("render", help="draw a configuration as PPM or SVG")
    p.add_argument("--config", required=True)
    p.add_argument("--format", choices=("ppm", "svg"), default="ppm")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--radius", type=int, default=None)
    p.set_defaults(func=cmd_render)
    return parser


def run(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args, out)
    except (UsageError, GasketError, ConstructionError, RenderError, engine.SandpileError,
            integrals.ResolutionError, ValueError, KeyError, TypeError) as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
