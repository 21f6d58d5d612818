"""Command-line front end.

    tsn-sim run --scenario PATH [--proxy on|off] [--out PATH]
                [--format csv|summary] [--bin-width DUR] [--histogram PATH]
    tsn-sim conflist --in PATH [--in-place]

``--scenario paper-fig2`` selects the bundled operation example. The
``TSN_SIM_SEED`` environment variable overrides the scenario seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, List, Optional

from .cni import ConflistError, emit_conflist, insert_proxy_plugin, parse_conflist
from .engine import ScenarioError, run_scenario
from .report import build_report, format_summary, write_histogram_csv, write_trace_csv
from .scenario import load_scenario, parse_duration

log = logging.getLogger("tsnproxy")

SEED_ENV = "TSN_SIM_SEED"


def _atomic_write(path: Path, write: Callable) -> None:
    """Write via a temp file so a failed run never leaves a partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _seed_from_env() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw, 0)
    except ValueError:
        raise ScenarioError(SEED_ENV, f"not an integer: {raw!r}") from None


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario, seed_override=_seed_from_env())
        bin_width = parse_duration(args.bin_width, "--bin-width")
        if bin_width <= 0:
            raise ScenarioError("--bin-width", "must be positive")
    except FileNotFoundError:
        print(f"error: scenario file not found: {args.scenario}", file=sys.stderr)
        return 2
    except ScenarioError as exc:
        print(f"error: invalid scenario {args.scenario}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return 2

    if args.proxy is not None:
        scenario = dataclasses.replace(scenario, proxy_enabled=args.proxy == "on")

    result = run_scenario(scenario)
    report = build_report(scenario, result, bin_width)
    stats_line = "stats " + " ".join(f"{k}={v}" for k, v in result.stats.as_dict().items())

    if args.format == "csv":
        def write(fh):
            write_trace_csv(result.traces, fh)
    else:
        title = f"scenario {scenario.name}, proxy {'on' if scenario.proxy_enabled else 'off'}"

        def write(fh):
            fh.write(format_summary(report, title))

    try:
        if args.out in (None, "-"):
            write(sys.stdout)
        else:
            _atomic_write(Path(args.out), write)
        if args.histogram:
            _atomic_write(Path(args.histogram), lambda fh: write_histogram_csv(report, fh))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    if args.format == "csv":
        print(stats_line, file=sys.stderr)
    return 0


def cmd_conflist(args: argparse.Namespace) -> int:
    path = Path(args.input)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return 2
    try:
        conflist = parse_conflist(text)
    except ConflistError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return 2

    rewritten = insert_proxy_plugin(conflist)
    if not args.in_place:
        sys.stdout.write(text if rewritten is conflist else emit_conflist(rewritten))
        return 0
    if rewritten is conflist:
        log.info("%s already chains tsn-proxy; left untouched", path)
        return 0
    try:
        _atomic_write(path, lambda fh: fh.write(emit_conflist(rewritten)))
    except OSError as exc:
        print(f"error: cannot write {path}: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsn-sim", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and emit a trace or summary")
    run.add_argument("--scenario", required=True,
                     help="scenario JSON file, or 'paper-fig2' for the bundled example")
    run.add_argument("--proxy", choices=("on", "off"), help="override proxy_enabled")
    run.add_argument("--out", help="output file (default: stdout)")
    run.add_argument("--format", choices=("csv", "summary"), default="summary")
    run.add_argument("--bin-width", default="1us", help="histogram bin width (default 1us)")
    run.add_argument("--histogram", help="also write per-listener phase histogram CSV here")
    run.set_defaults(func=cmd_run)

    conf = sub.add_parser("conflist", help="chain the tsn-proxy plugin into a CNI conflist")
    conf.add_argument("--in", dest="input", required=True, help="conflist JSON file")
    conf.add_argument("--in-place", action="store_true", help="rewrite the file instead of printing")
    conf.set_defaults(func=cmd_conflist)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
