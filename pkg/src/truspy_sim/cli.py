"""Command-line entry point: ``run``, ``sweep`` and ``report``.

Exit status is 0 on success, 1 on a configuration error and 2 on an I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, IoError
from .harness import ScenarioConfig, emit_report, load_reports, render, run_scenario, sweep

REPORT_FILE = "report.json"
SWEEP_FILE = "sweep.json"
TIMING_FILE = "timing.json"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    return out


def _write_timing(out: Path, seconds: list[float]) -> None:
    try:
        (out / TIMING_FILE).write_text(json.dumps({"wall_clock_seconds": seconds}) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write timing sidecar: {exc}") from exc


def cmd_run(args) -> None:
    config = ScenarioConfig.from_file(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    report = run_scenario(config, workers=args.workers)
    out = _out_dir(args.out)
    emit_report(report, "json", out / REPORT_FILE)
    _write_timing(out, [report.wall_clock_seconds])
    doc = report.document
    print(f"trials={doc['trials']} success_rate={doc['success_rate']} "
          f"cross_world_evictions={doc['cross_world_evictions_total']} "
          f"gap={doc['equalization_gap']['read']} -> {out / REPORT_FILE}")


def cmd_sweep(args) -> None:
    config = ScenarioConfig.from_file(args.config)
    values = [_parse_value(v) for v in args.values.split(",")] if args.values else []
    reports = sweep(config, args.param, values, workers=args.workers)
    out = _out_dir(args.out)
    emit_report(reports, "json", out / SWEEP_FILE)
    _write_timing(out, [r.wall_clock_seconds for r in reports])
    for value, report in zip(values, reports):
        print(f"{args.param}={value}: success_rate={report.success_rate}")


def cmd_report(args) -> None:
    source = Path(args.input)
    if source.is_dir():
        source = source / (REPORT_FILE if (source / REPORT_FILE).exists() else SWEEP_FILE)
    reports = load_reports(source)
    payload = reports[0] if len(reports) == 1 and source.name == REPORT_FILE else reports
    if args.out:
        emit_report(payload, args.format, args.out)
    else:
        sys.stdout.write(render(payload, args.format))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="truspy-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every trial of a scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="out")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="rerun a scenario across values of one parameter")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True, help="dotted path, e.g. attack.noise_flip_probability")
    sw.add_argument("--values", required=True, help="comma-separated; each parsed as JSON if possible")
    sw.add_argument("--out", default="out")
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="re-emit a stored report as JSON or CSV")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--format", choices=("json", "csv"), default="json")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except IoError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0
