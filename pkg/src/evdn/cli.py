"""Command-line entry point ``evdn``.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
input, undefined metric, failed benchmark).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .core import SensorGeometry, slice_by_count, validate_packet
from .bench import BenchmarkError, emit_report, load_plan, run_benchmark
from .filters import FILTERS, apply_filter, make_config
from .io import EventFormatError, is_binary_file, load_events, save_events
from .metrics import DEFAULT_GROUP_SIZE, DEFAULT_M, MetricParams, UndefinedMetricError, WarpModel, mesr
from .synth import NoiseSpec, SceneSpec, generate_scene, inject_uniform_noise

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

PATTERN_ALIASES = {"bar": "translating-bar", "disk": "translating-disk"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; we reserve 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _pair(text: str, sep: str, cast, what: str):
    parts = text.lower().split(sep)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"{what} must look like a{sep}b, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad {what} {text!r}") from None


def _size(text):
    return _pair(text, "x", int, "size")


def _velocity(text):
    return _pair(text, ",", float, "velocity")


def _warp(text):
    try:
        return WarpModel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _kv(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"--param expects key=value, got {text!r}")
    return key, value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evdn", description="Event-camera denoising metrics, filters and benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("score", help="MESR of an events file")
    s.add_argument("events")
    s.add_argument("--m", type=int, default=DEFAULT_M, help="reference event count M")
    s.add_argument("--group", type=int, default=DEFAULT_GROUP_SIZE, help="events per group")
    s.add_argument("--warp", type=_warp, default=WarpModel.identity(), help="identity | linear:vx,vy[,tref]")

    d = sub.add_parser("denoise", help="run a filter over an events file")
    d.add_argument("events")
    d.add_argument("--filter", required=True, choices=sorted(FILTERS))
    d.add_argument("--param", type=_kv, action="append", default=[], metavar="K=V")
    d.add_argument("-o", "--output", required=True)
    d.add_argument("--format", choices=("text", "binary"), help="output format (default: same as input)")

    b = sub.add_parser("bench", help="run a benchmark plan")
    b.add_argument("--plan", required=True, help="JSON plan file")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--format", choices=("csv", "json"), help="report format (default: from the suffix)")
    b.add_argument("--timing", action="store_true", help="record per-cell wall time")

    g = sub.add_parser("synth", help="generate a synthetic scene")
    g.add_argument("--pattern", default="bar", choices=sorted(PATTERN_ALIASES) + sorted(PATTERN_ALIASES.values()))
    g.add_argument("--size", type=_size, required=True, metavar="WxH")
    g.add_argument("--velocity", type=_velocity, required=True, metavar="VX,VY")
    g.add_argument("--duration", type=int, required=True, metavar="US")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--contrast", type=float, default=0.2, help="contrast threshold c")
    g.add_argument("--l1", type=float, default=0.4, help="pattern log intensity (background is 0)")
    g.add_argument("--bar-width", type=float, default=8.0)
    g.add_argument("--period", type=float, help="repeat the bar into a grating")
    g.add_argument("--radius", type=float)
    g.add_argument("--step", type=int, default=100, metavar="US")
    g.add_argument("--threshold-sigma", type=float, default=0.0)
    g.add_argument("-o", "--output", required=True)

    n = sub.add_parser("inject-noise", help="add uniform background-activity noise")
    n.add_argument("events")
    n.add_argument("--ratio", type=float, required=True)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("-o", "--output", required=True)

    v = sub.add_parser("validate", help="check ordering, bounds and polarity")
    v.add_argument("events")
    return p


def _load(path):
    try:
        return load_events(path)
    except (OSError, EventFormatError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _save(packet, path, binary=None):
    try:
        save_events(packet, path, binary=binary)
    except (OSError, EventFormatError) as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def cmd_score(args, out):
    if args.m < 2 or args.group < 1:
        raise UsageError("--m must be >= 2 and --group >= 1")
    packet = _load(args.events)
    groups = slice_by_count(packet, args.group)
    if not groups:
        raise DataError(f"{len(packet)} events do not fill one group of {args.group}; need N >= M={args.m}")
    try:
        result = mesr(groups, args.warp, MetricParams(args.m))
    except UndefinedMetricError as exc:
        raise DataError(str(exc)) from None
    print(f"MESR {result.mean:.6f} groups {result.groups} excluded {result.excluded}", file=out)
    for i, value in enumerate(result.per_group):
        print(f"group {i} " + ("excluded" if value is None else f"{value:.6f}"), file=out)


def cmd_denoise(args, out):
    try:
        config = make_config(args.filter, **dict(args.param))
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc.args[0] if isinstance(exc, KeyError) else exc)) from None
    packet = _load(args.events)
    filtered, trace = apply_filter(packet, args.filter, config)
    binary = is_binary_file(args.events) if args.format is None else args.format == "binary"
    _save(filtered, args.output, binary)
    print(f"kept {trace.kept_count}/{len(packet)} ratio {trace.kept_ratio:.6f}", file=out)


def cmd_bench(args, out):
    fmt = args.format or ("json" if Path(args.output).suffix.lower() == ".json" else "csv")
    try:
        plan = load_plan(args.plan)
    except OSError as exc:
        raise DataError(f"cannot read plan {args.plan}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"bad plan {args.plan}: {exc}") from None
    if args.timing:
        plan = replace(plan, record_timing=True)
    try:
        report = run_benchmark(plan)
    except (BenchmarkError, ValueError) as exc:
        raise DataError(str(exc)) from None
    try:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            emit_report(report, fmt, fh)
    except OSError as exc:
        raise DataError(f"cannot write {args.output}: {exc}") from None
    print(f"{len(report.cells)} cells written to {args.output}", file=out)


def cmd_synth(args, out):
    try:
        spec = SceneSpec(
            SensorGeometry(*args.size),
            args.duration,
            pattern=PATTERN_ALIASES.get(args.pattern, args.pattern),
            velocity=args.velocity,
            contrast_threshold=args.contrast,
            l1=args.l1,
            bar_width=args.bar_width,
            period=args.period,
            radius=args.radius,
            step_us=args.step,
            threshold_sigma=args.threshold_sigma,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    packet = generate_scene(spec, args.seed)
    _save(packet, args.output)
    print(f"{len(packet)} events written to {args.output}", file=out)


def cmd_inject_noise(args, out):
    try:
        spec = NoiseSpec(args.ratio, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    packet = _load(args.events)
    try:
        noisy = inject_uniform_noise(packet, spec)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    _save(noisy, args.output, is_binary_file(args.events))
    print(f"{len(noisy) - len(packet)} noise events added, {len(noisy)} total", file=out)


def cmd_validate(args, out):
    try:
        packet = load_events(args.events, strict=False)
    except (OSError, EventFormatError) as exc:
        raise DataError(f"cannot read {args.events}: {exc}") from None
    report = validate_packet(packet)
    print(report, file=out)
    if not report.ok:
        raise DataError(f"{len(report.violations)} violation(s) in {args.events}")


COMMANDS = {
    "score": cmd_score,
    "denoise": cmd_denoise,
    "bench": cmd_bench,
    "synth": cmd_synth,
    "inject-noise": cmd_inject_noise,
    "validate": cmd_validate,
}


def cli_main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"evdn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"evdn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(cli_main(sys.argv[1:]))
