"""Command line: ``spinguide run|validate|report``.

Exit codes: 0 success, 2 schema error, 3 numerical-check failure or
numerical error, 1 for I/O problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_IO, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinguide",
                                     description="Spin-1/2 rigid rotator guidance simulations")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a scenario file")
    run.add_argument("scenario", type=Path)
    run.add_argument("--out-dir", type=Path, default=Path("spinguide-out"))
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--threads", type=int, default=None,
                     help="thread cap for numerical libraries (results do not depend on it)")
    val = sub.add_parser("validate", help="check a scenario file against the schema")
    val.add_argument("scenario", type=Path)
    rep = sub.add_parser("report", help="summarize a manifest and verify its outputs")
    rep.add_argument("manifest", type=Path)
    return parser


def _cap_threads(n):
    if n is None:
        return
    if n < 1:
        raise SystemExit("--threads must be >= 1")
    for var in THREAD_VARS:
        os.environ[var] = str(n)


def _cmd_run(args) -> int:
    from ..errors import SchemaError, SpinguideError
    from .run import run
    from .scenario import parse_scenario

    try:
        sc = parse_scenario(args.scenario)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        man = run(sc, args.out_dir, seed=args.seed, threads=args.threads)
    except SpinguideError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, ok in man.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"manifest: {Path(args.out_dir) / 'manifest.json'}")
    return EXIT_OK if man.passed else EXIT_NUMERIC


def _cmd_validate(args) -> int:
    from ..errors import SchemaError
    from .scenario import parse_scenario

    try:
        sc = parse_scenario(args.scenario)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print(f"ok: {sc.name} ({', '.join(sc.ordered_modes())})")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .outputs import check_outputs, manifest_hash

    try:
        man = json.loads(args.manifest.read_text())
    except json.JSONDecodeError as exc:
        print(f"schema error: manifest is not JSON ({exc})", file=sys.stderr)
        return EXIT_SCHEMA
    if not isinstance(man, dict) or not {"outputs", "checks", "manifest_hash"} <= set(man):
        print("schema error: not a spinguide manifest", file=sys.stderr)
        return EXIT_SCHEMA
    problems = check_outputs(man, args.manifest.parent)
    if manifest_hash(man) != man["manifest_hash"]:
        problems.append("manifest hash does not match its content")
    print(f"scenario {man.get('scenario_name')} seed {man.get('seed')} "
          f"hash {man['manifest_hash'][:12]}")
    for name, ok in sorted(man["checks"].items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for w in man.get("warnings", []):
        print(f"warning: {w}")
    for p in problems:
        print(f"problem: {p}")
    if problems:
        return EXIT_IO
    return EXIT_OK if all(man["checks"].values()) else EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        _cap_threads(args.threads)
    try:
        return {"run": _cmd_run, "validate": _cmd_validate, "report": _cmd_report}[args.command](args)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
