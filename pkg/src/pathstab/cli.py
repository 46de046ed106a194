"""pathstab command line.

Commands: analyze, report, simulate, convert. Exit codes: 0 ok, 1 bad
configuration or arguments, 2 unreadable or malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import reports, synth
from .ingest import (
    LateRecordError,
    Strictness,
    TraceFormat,
    TraceFormatError,
    TraceSource,
    stream_updates,
    write_records,
)
from .metrics import Reference
from .pipeline import AnalysisConfig, ConfigError, iter_analysis

log = logging.getLogger("pathstab")

EXIT_OK, EXIT_CONFIG, EXIT_INPUT = 0, 1, 2

REFERENCES = {
    "stable": frozenset({Reference.MOST_STABLE}),
    "selected": frozenset({Reference.BEST_SELECTED}),
    "both": frozenset(Reference),
}

CSV_HELP = "ticks.csv columns: " + ", ".join(reports.CSV_COLUMNS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _atomic_write(path: Path, text_writer) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            text_writer(fh)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def read_config_file(path: str) -> dict:
    """key=value lines; '#' starts a comment. Keys match long flag names."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, values: dict) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = text.lower() in ("1", "true", "yes", "on")
            continue
        value = action.type(text) if action.type else text
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: invalid choice {text!r}")
        defaults[key] = value
    parser.set_defaults(**defaults)


def _analyze_parser(sub) -> argparse.ArgumentParser:
    p = sub.add_parser(
        "analyze",
        help="replay a trace and write per-tick metrics",
        description="Replay an update trace and write ticks.csv and summary.json. " + CSV_HELP,
    )
    p.add_argument("--config", help="key=value file mirroring these flags")
    p.add_argument("--trace", help="update trace file")
    p.add_argument("--format", choices=("psv", "ndjson"), default="psv")
    p.add_argument("--mrai", type=int, default=30, help="tick length in seconds")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--t0", type=float, default=None, help="start time (default: first record)")
    p.add_argument("--reference", choices=tuple(REFERENCES), default="both")
    p.add_argument("--criteria", default=None, help="comma-separated decision criteria")
    p.add_argument("--strict", action="store_true", help="abort on the first malformed line")
    p.add_argument("--reorder-window", type=float, default=60.0)
    p.add_argument("--end-tick", type=int, default=None, help="keep ticking until this tick")
    p.add_argument("--drain", action="store_true", help="keep ticking until all counters are zero")
    p.add_argument("--stability-lane", action="store_true", help="also run the differential-stability lane")
    p.add_argument("--as-printed", action="store_true", help="unrepaired table-delta ratio (may divide by zero)")
    p.add_argument("--ndjson", action="store_true", help="also write ticks.ndjson")
    p.add_argument("--out", default=".", help="output directory")
    return p


def _config_from(args) -> AnalysisConfig:
    cfg = AnalysisConfig(
        mrai_secs=args.mrai,
        alpha=args.alpha,
        beta=args.beta,
        t0=args.t0,
        references=REFERENCES[args.reference],
        end_tick=args.end_tick,
        drain=args.drain,
        stability_lane=args.stability_lane,
        as_printed_delta=args.as_printed,
    )
    if args.criteria:
        cfg.criteria = tuple(c.strip() for c in args.criteria.split(",") if c.strip())
    cfg.validate()
    return cfg


def cmd_analyze(args) -> int:
    try:
        cfg = _config_from(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    if not args.trace:
        log.error("configuration error: --trace is required")
        return EXIT_CONFIG
    trace = Path(args.trace)
    if not trace.is_file():
        log.error("cannot read trace file: %s", trace)
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = TraceSource(
        path=trace,
        format=TraceFormat(args.format),
        strictness=Strictness.STRICT if args.strict else Strictness.LENIENT,
        reorder_window=args.reorder_window,
    )
    records, stats = stream_updates(src)
    analyzer, ticks = iter_analysis(records, cfg)
    analyzer.ingest_stats = stats

    extra = None
    if args.ndjson:
        fd, extra = tempfile.mkstemp(dir=out, prefix=".ticks.ndjson.")
        os.close(fd)

    def write_csv(fh):
        w = reports.CsvReportWriter(fh)
        nd = open(extra, "w", encoding="utf-8", newline="\n") if extra else None
        try:
            ndw = reports.NdjsonReportWriter(nd) if nd else None
            for r in ticks:
                w.write(r)
                if ndw:
                    ndw.write(r)
        finally:
            if nd:
                nd.close()

    try:
        _atomic_write(out / "ticks.csv", write_csv)
    except (TraceFormatError, LateRecordError, UnicodeDecodeError, OSError) as exc:
        if extra:
            os.unlink(extra)
        log.error("ingest failed: %s", exc)
        return EXIT_INPUT
    if extra:
        os.replace(extra, out / "ticks.ndjson")
    summary = dict(analyzer.summary)
    summary["ingest"] = stats.as_dict()
    _atomic_write(out / "summary.json", lambda fh: fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n"))
    if stats.records_skipped:
        log.warning("skipped %d malformed or late records", stats.records_skipped)
    log.info("%d ticks written to %s", summary["ticks"], out)
    return EXIT_OK


def cmd_report(args) -> int:
    ticks_path = Path(args.ticks)
    summary_path = Path(args.summary) if args.summary else ticks_path.parent / "summary.json"
    try:
        if args.fig == 8:
            with open(summary_path, encoding="utf-8") as fh:
                header, rows = reports.figure_rows(8, summary=json.load(fh))
        else:
            with open(ticks_path, encoding="utf-8") as fh:
                header, rows = reports.figure_rows(args.fig, reports.read_ticks_csv(fh))
    except (OSError, ValueError, KeyError) as exc:
        log.error("cannot build figure %s data: %s", args.fig, exc)
        return EXIT_INPUT
    if args.out:
        _atomic_write(Path(args.out), lambda fh: reports.write_figure(header, rows, fh))
    else:
        reports.write_figure(header, rows, sys.stdout)
    return EXIT_OK


def _edge(text: str) -> tuple:
    a, b = text.replace(",", "-").split("-")
    return int(a), int(b)


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x)


def cmd_simulate(args) -> int:
    try:
        if args.topology == "ring":
            topo = synth.ring(args.nodes or 4, args.peers or (1,), args.origin or 2)
        elif args.topology == "mesh":
            topo = synth.mesh(args.nodes or 4, args.peers or (1, 2), args.origin, args.stub_origin)
        else:
            topo = synth.line(args.nodes or 2)
        kind = synth.ScenarioKind(args.scenario)
        failed = args.fail_edge
        if kind is synth.ScenarioKind.PATH_EXPLORATION and failed is None:
            failed = (1, 2)
        spec = synth.ScenarioSpec(kind, args.ticks, args.period, failed, args.fail_tick, args.mrai)
        result = synth.generate(topo, spec, prefix=args.prefix, base_ts=args.base_ts, seed=args.seed)
    except ValueError as exc:
        log.error("invalid scenario: %s", exc)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmt = TraceFormat(args.format)
    name = "trace.psv" if fmt is TraceFormat.PIPE else "trace.ndjson"
    _atomic_write(out / name, lambda fh: write_records(result.records, fh, fmt))
    _atomic_write(out / "truth.ndjson", result.truth.write)
    log.info("%d records written to %s", len(result.records), out / name)
    return EXIT_OK


def cmd_convert(args) -> int:
    src = TraceSource(path=args.input, format=TraceFormat(args.src_format), strictness=Strictness.STRICT, reorder_window=0.0)
    if not Path(args.input).is_file():
        log.error("cannot read trace file: %s", args.input)
        return EXIT_INPUT
    records, _ = stream_updates(src)
    fmt = TraceFormat(args.dst_format)
    try:
        if args.out:
            _atomic_write(Path(args.out), lambda fh: write_records(records, fh, fmt))
        else:
            write_records(records, sys.stdout, fmt)
    except (TraceFormatError, LateRecordError) as exc:
        log.error("ingest failed: %s", exc)
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathstab", description="Local stability metrics for path-vector routing traces.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _analyze_parser(sub).set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="extract plot data from analyze output")
    p.add_argument("--ticks", default="ticks.csv")
    p.add_argument("--summary", default=None, help="summary.json (figure 8); default: next to --ticks")
    p.add_argument("--fig", type=int, choices=reports.FIGURES, required=True)
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="write a synthetic trace and its ground truth")
    p.add_argument("--scenario", choices=[k.value for k in synth.ScenarioKind], default="quiescent")
    p.add_argument("--topology", choices=("ring", "mesh", "line"), default="ring")
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--peers", type=_ints, default=None, help="nodes linked to the observer, e.g. 1,2")
    p.add_argument("--origin", type=int, default=None)
    p.add_argument("--stub-origin", action="store_true")
    p.add_argument("--ticks", type=int, default=5, help="scenario length in ticks")
    p.add_argument("--period", type=int, default=1)
    p.add_argument("--fail-edge", type=_edge, default=None, help="e.g. 1-2")
    p.add_argument("--fail-tick", type=int, default=2)
    p.add_argument("--mrai", type=int, default=30)
    p.add_argument("--prefix", default=synth.DEFAULT_PREFIX)
    p.add_argument("--base-ts", type=float, default=synth.DEFAULT_BASE_TS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("psv", "ndjson"), default="psv")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("convert", help="convert between trace formats")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--from", dest="src_format", choices=("psv", "ndjson"), default="psv")
    p.add_argument("--to", dest="dst_format", choices=("psv", "ndjson"), default="ndjson")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            sub = parser._subparsers._group_actions[0].choices[args.command]
            _apply_config(sub, read_config_file(args.config))
            args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"pathstab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"pathstab: error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("pathstab: %(levelname)s: %(message)s"))
    log.handlers = [handler]
    log.propagate = False
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
