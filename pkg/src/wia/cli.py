"""Command line entry points.

wia analyze  structure extraction to stdout summary / JSON / DOT
wia eval     evaluate a workbook, print cell=value lines
wia evolve   one batch refinement run from an annotation file
wia serve    HTTP service hosting workbooks and sessions

Exit codes: 0 success, 1 bad input (schema, parse, annotation or
address problems), 2 I/O failures.  WIA_LOG=off|info|debug controls
logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile

from .errors import SchemaError, WiaError
from .evaluate import evaluate, evaluate_cells
from .export import build_structure, export_dot, export_json
from .model import (Workbook, load_workbook, parse_address,
                    save_workbook)
from .segments import generate_groups

log = logging.getLogger("wia.cli")


def setup_logging() -> None:
    level_name = os.environ.get("WIA_LOG", "off").lower()
    if level_name == "off":
        logging.disable(logging.CRITICAL)
        return
    levels = {"info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        print(f"warning: WIA_LOG must be off|info|debug, "
              f"got {level_name!r}", file=sys.stderr)
        return
    logging.basicConfig(
        level=levels[level_name],
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _read_file(path: str) -> bytes:
    with open(path, "rb") as handle:
        return handle.read()


def write_atomic(path: str, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so a crash mid-write
    never leaves a truncated file behind."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory,
                               prefix=os.path.basename(path) + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _plural(n: int, noun: str) -> str:
    return f"{n} {noun}" if n == 1 else f"{n} {noun}s"


def cmd_analyze(args: argparse.Namespace) -> int:
    workbook = load_workbook(_read_file(args.workbook))
    groups, graph = generate_groups(workbook)
    structure = build_structure(workbook, groups, graph,
                                include_cells=args.level == "cell")
    if args.json_out:
        write_atomic(args.json_out, export_json(structure))
        log.info("wrote %s", args.json_out)
    if args.dot_out:
        dot = export_dot(structure, level=args.level)
        write_atomic(args.dot_out, dot.encode("utf-8"))
        log.info("wrote %s", args.dot_out)
    print(f"{_plural(len(structure.groups), 'group')}, "
          f"{_plural(len(structure.group_edges), 'group edge')}, "
          f"{_plural(workbook.cell_count(), 'cell')}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    workbook = load_workbook(_read_file(args.workbook))
    if args.cell:
        addr = parse_address(args.cell, _default_sheet(workbook))
        result = evaluate_cells(workbook, [addr])
        resolved = workbook.resolve(addr)
        print(f"{resolved}={result.values[resolved].display()}")
        return 0
    result = evaluate(workbook)
    for address in workbook.addresses():
        print(f"{address}={result.values[address].display()}")
    return 0


def _default_sheet(workbook: Workbook) -> str:
    return workbook.sheets[0].name if workbook.sheets else "S1"


def cmd_evolve(args: argparse.Namespace) -> int:
    from .evolve import EvolutionConfig, EvolutionSession
    from .evolve.session import annotations_from_json

    workbook = load_workbook(_read_file(args.workbook))
    try:
        raw = json.loads(_read_file(args.annotations).decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    annotations = annotations_from_json(raw, _default_sheet(workbook),
                                        require_round=0)
    session = EvolutionSession(workbook, EvolutionConfig(seed=args.seed))
    session.add_annotations(annotations)
    session.step(args.generations)
    best = session.best
    log.info("best fitness %r after %d generations", best.fitness,
             args.generations)
    if args.out:
        write_atomic(args.out, save_workbook(session.export_model(
            best.genome)))
    print(best.fitness)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port,
                log_level="warning" if os.environ.get("WIA_LOG", "off")
                == "off" else "info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wia",
        description="Spreadsheet structure extraction and interactive "
                    "coefficient refinement.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze",
                       help="extract the structure graph of a workbook")
    p.add_argument("workbook", help="workbook JSON file")
    p.add_argument("--json", dest="json_out", metavar="OUT",
                   help="write the structure graph as JSON")
    p.add_argument("--dot", dest="dot_out", metavar="OUT",
                   help="write a Graphviz rendering")
    p.add_argument("--level", choices=("group", "cell"), default="group",
                   help="graph granularity (default: group)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="evaluate a workbook")
    p.add_argument("workbook", help="workbook JSON file")
    p.add_argument("--cell", help="print this cell only (e.g. A3 or S2!B1)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("evolve",
                       help="refine coefficients against an annotation file")
    p.add_argument("workbook", help="workbook JSON file")
    p.add_argument("--annotations", required=True,
                   help="JSON array of annotations")
    p.add_argument("--generations", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the best model's workbook JSON here")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WiaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
