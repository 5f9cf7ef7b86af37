"""Command line: ``clusterrev run|sweep|replay``.

Exit status is 0 on success, 2 when the input does not validate and 1 on any
other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .engine import SimulationError, dump_trace
from .report import emit_comparison, emit_report, replay
from .runner import digest, run_scenario, sweep
from .scenario import ScenarioError, load_scenario

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clusterrev", description="Cluster-scoped certificate revocation simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario file (or a bundled name such as example_b)")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--t-end", type=float, dest="t_end", help="override the end time in seconds")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.add_argument("--trace", action="store_true", help="also write trace.jsonl")
    run.add_argument("--format", choices=("json", "csv"), default="json")

    sw = sub.add_parser("sweep", help="run every *.yaml in a directory, one process each")
    sw.add_argument("directory")
    sw.add_argument("--workers", type=int)

    rp = sub.add_parser("replay", help="recount the counters of a trace file")
    rp.add_argument("trace")
    return p


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.scenario).with_overrides(args.seed, args.t_end)
    report, trace = run_scenario(cfg)
    out = Path(args.out)
    emit_report(report, args.format, out)
    if args.trace:
        (out / "trace.jsonl").write_text(dump_trace(trace), encoding="utf-8")
    sys.stdout.write(emit_comparison(report))
    sys.stdout.write(f"trace sha256 {digest(trace)}\n")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    if not Path(args.directory).is_dir():
        raise ScenarioError("", f"{args.directory} is not a directory")
    status = EXIT_OK
    for path, trace_digest, error in sweep(args.directory, args.workers):
        if error is None:
            print(f"ok    {path}  {trace_digest}")
        else:
            print(f"FAIL  {path}  {error}")
            status = EXIT_RUNTIME
    return status


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        lines = Path(args.trace).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ScenarioError("", f"cannot read {args.trace}: {exc.strerror}") from None
    try:
        counts = replay(lines)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ScenarioError("", f"{args.trace} is not a trace file: {exc}") from None
    print(json.dumps(dict(sorted(counts.items())), indent=2))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "replay": _cmd_replay}[args.command]
    try:
        return handler(args)
    except ScenarioError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
