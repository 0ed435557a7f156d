"""Bench command line: evaluation campaigns, fitting, serving, export.

Subcommands share four global flags: ``--config`` (JSON deployment file),
``--seed`` (overrides the configured RNG seed), ``--out`` (artifact
directory, created on demand) and ``--remote host:port`` (drive an external
SCPI endpoint instead of the in-process twin; supported by the measurement
campaigns).  Exit codes: 0 success or class AAA, 1 evaluation below target,
2 usage, 3 configuration or IO failure.

Reports are deterministic under (config, seed): all timestamps are virtual
and JSON is emitted with sorted keys.  Configuration files are never
modified.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .config import TwinConfig, config_hash, load_config
from .control import run_lti, run_sti
from .fitting import (FitProblem, PresetCache, Unachievable, fit_am15g,
                      fit_duties)
from .reporting import (REPORT_SCHEMA, LineClient, WireBench, WireError,
                        run_suite, scan_report, write_json, write_scan_csv,
                        write_spectral_csv)
from .scpi import DEFAULT_PORT, Instrument, serve, serve_stdio
from .spectral import bin_fractions, load_spectrum_csv, save_spectrum_csv
from .system import Testbed

EXIT_OK = 0
EXIT_BELOW_TARGET = 1
EXIT_USAGE = 2
EXIT_CONFIG_IO = 3


class UsageError(Exception):
    """Invalid flag combination detected after parsing."""


def _seed_type(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed {text!r} is not an integer")
    if not (0 <= value < 2**64):
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _feedback_type(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("on", "1", "true"):
        return True
    if lowered in ("off", "0", "false"):
        return False
    raise argparse.ArgumentTypeError("feedback must be on or off")


def _remote_type(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError("remote address must be host:port")
    try:
        return host, int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad remote port {port!r}")


def _add_common(sub: argparse.ArgumentParser, remote: bool = False) -> None:
    sub.add_argument("--config", metavar="PATH",
                     help="deployment configuration JSON")
    sub.add_argument("--seed", type=_seed_type, metavar="U64",
                     help="override the configured RNG seed")
    sub.add_argument("--out", metavar="DIR", default=".",
                     help="directory for reports and CSV artifacts")
    if remote:
        sub.add_argument("--remote", type=_remote_type, metavar="HOST:PORT",
                         help="drive an external SCPI server over TCP")


def _load_config(args) -> TwinConfig:
    if getattr(args, "config", None) is None:
        return TwinConfig()
    return load_config(args.config)


def _resolve_seed(args, config: TwinConfig) -> int:
    return config.seed if args.seed is None else args.seed


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_bench(args, config: TwinConfig):
    """In-process twin, or a wire adapter when --remote was given."""
    remote = getattr(args, "remote", None)
    if remote is None:
        return Testbed(config), None
    client = LineClient(*remote)
    return WireBench(client, config), client


def cmd_classify(args) -> int:
    config = _load_config(args)
    seed = _resolve_seed(args, config)
    out = _out_dir(args)
    bench, client = _make_bench(args, config)
    try:
        report, scan, sti, lti = run_suite(bench, seed,
                                           remote=client is not None)
        if client is not None:
            bench.drain_errors()
    finally:
        if client is not None:
            client.close()

    write_json(out / "report.json", report)
    write_spectral_csv(out / "spectral.csv", report["spectral"]["levels"])
    xs, ys = bench.field.scan_points(8)
    write_scan_csv(out / "scan.csv", xs, ys, scan.values)
    sti.save_csv(out / "sti.csv")
    lti.save_csv(out / "lti.csv")

    overall = report["overall"]
    print(f"spectral    class {overall['spectral_class']}  "
          f"(worst ratio {report['spectral']['worst_ratio']:.4f})")
    print(f"uniformity  class {overall['uniformity_class']}  "
          f"({report['uniformity']['percent']:.4f} %)")
    print(f"sti         class {overall['sti_class']}  "
          f"({report['sti']['metric_percent']:.4f} %)")
    print(f"lti         class {overall['lti_class']}  "
          f"({report['lti']['metric_percent']:.4f} %)")
    print(f"overall     {overall['verdict']}")
    print(f"report      {out / 'report.json'}")
    return EXIT_OK if overall["verdict"] == "AAA" else EXIT_BELOW_TARGET


def cmd_scan(args) -> int:
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    config = _load_config(args)
    seed = _resolve_seed(args, config)
    out = _out_dir(args)
    bench, client = _make_bench(args, config)
    try:
        record = scan_report(bench, args.grid, args.level, seed)
        if client is not None:
            bench.drain_errors()
    finally:
        if client is not None:
            client.close()

    write_json(out / "scan.json", record)
    write_scan_csv(out / "scan.csv", record["xs_mm"], record["ys_mm"],
                   record["values"])
    print(f"nonuniformity {record['percent']:.4f} %  class {record['class']}")
    print(f"front mean {record['front_mean']:.5f}  "
          f"rear mean {record['rear_mean']:.5f}")
    print(f"grid        {out / 'scan.csv'}")
    return EXIT_OK if record["class"] == "A" else EXIT_BELOW_TARGET


def cmd_fit(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    channels = config.board
    if args.target.upper() == "AM15G":
        result = fit_am15g(channels, args.level)
        target_name = "AM15G"
    else:
        spectrum = load_spectrum_csv(args.target)
        fractions = bin_fractions(spectrum)
        result = fit_duties(FitProblem(channels, fractions, args.level))
        target_name = str(args.target)

    for name, duty in zip(channels.names, result.duties):
        print(f"{name:<16s} {duty * 100.0:9.4f} %")
    ratios = "  ".join(f"{r:.4f}" for r in result.ratios)
    print(f"ratios      {ratios}")
    print(f"class       {result.achieved_class}")
    print(f"converged   {result.converged} ({result.iterations} iterations)")

    payload = {
        "schema": REPORT_SCHEMA,
        "tool_version": __version__,
        "config_hash": config_hash(config),
        "target": target_name,
        "level_w_m2": args.level,
        "duties_pct": [float(d) * 100.0 for d in result.duties],
        "duty_codes": [int(c) for c in result.duty_codes],
        "achieved_fractions_pct": [float(f) for f in
                                   result.achieved_fractions],
        "ratios": [float(r) for r in result.ratios],
        "class": result.achieved_class,
        "iterations": result.iterations,
        "converged": result.converged,
        "objective": result.objective,
    }
    write_json(out / "fit.json", payload)
    print(f"solution    {out / 'fit.json'}")
    return EXIT_OK


def cmd_sti(args) -> int:
    if args.cadence <= 0:
        raise UsageError("--cadence must be positive")
    if args.duration <= 0:
        raise UsageError("--duration must be positive")
    if args.duration / args.cadence < 2:
        raise UsageError("window must contain at least two samples")
    config = _load_config(args)
    seed = _resolve_seed(args, config)
    out = _out_dir(args)
    bench, client = _make_bench(args, config)
    try:
        result = run_sti(bench, level_w_m2=args.level, feedback=args.feedback,
                         duration_s=args.duration, cadence_s=args.cadence,
                         seed=seed)
        if client is not None:
            bench.drain_errors()
    finally:
        if client is not None:
            client.close()
    result.save_csv(out / "sti.csv")
    print(f"sti {result.metric_percent:.4f} %  class "
          f"{result.simulator_class}  (feedback "
          f"{'on' if result.feedback else 'off'}, {result.values.size} "
          f"samples)")
    print(f"series      {out / 'sti.csv'}")
    return EXIT_OK if result.simulator_class == "A" else EXIT_BELOW_TARGET


def cmd_lti(args) -> int:
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    if args.interval <= 0:
        raise UsageError("--interval must be positive")
    config = _load_config(args)
    seed = _resolve_seed(args, config)
    out = _out_dir(args)
    bench, client = _make_bench(args, config)
    try:
        result = run_lti(bench, level_w_m2=args.level, feedback=args.feedback,
                         samples=args.samples, interval_s=args.interval,
                         seed=seed)
        if client is not None:
            bench.drain_errors()
    finally:
        if client is not None:
            client.close()
    result.save_csv(out / "lti.csv")
    span_h = (result.timestamps_s[-1] - result.timestamps_s[0]) / 3600.0
    print(f"lti {result.metric_percent:.4f} %  class "
          f"{result.simulator_class}  (feedback "
          f"{'on' if result.feedback else 'off'}, {result.values.size} "
          f"samples over {span_h:.1f} h virtual)")
    print(f"series      {out / 'lti.csv'}")
    return EXIT_OK if result.simulator_class == "A" else EXIT_BELOW_TARGET


def cmd_serve(args) -> int:
    config = _load_config(args)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    instrument = Instrument(Testbed(config))
    if args.stdio:
        serve_stdio(instrument)
        return EXIT_OK

    def announce(port: int) -> None:
        print(f"SCPI ready on {args.bind}:{port}", flush=True)

    try:
        serve(instrument, host=args.bind, port=args.port,
              ready_callback=announce)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_export_spectrum(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    channels = config.board
    duties = PresetCache(channels).duties_for_level(args.level)
    spectrum = channels.spectrum(duties, config.board_temp_c)
    path = out / f"spectrum_{args.level:g}.csv"
    save_spectrum_csv(path, spectrum)
    print(f"total       {spectrum.total_w_m2:.4f} W/m^2")
    print(f"spectrum    {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="solartwin",
        description="LED solar-simulator digital twin bench")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("classify",
                        help="full evaluation campaign and class verdict")
    _add_common(p, remote=True)
    p.set_defaults(func=cmd_classify)

    p = subs.add_parser("scan", help="spatial uniformity grid scan")
    _add_common(p, remote=True)
    p.add_argument("--grid", type=int, default=8, metavar="N",
                   help="grid points per side (default 8)")
    p.add_argument("--level", type=float, default=500.0, metavar="W_M2",
                   help="irradiance level during the scan")
    p.set_defaults(func=cmd_scan)

    p = subs.add_parser("fit",
                        help="solve channel duties for a target spectrum")
    _add_common(p)
    p.add_argument("target", help="AM15G or a spectrum CSV path")
    p.add_argument("level", type=float, help="total irradiance in W/m^2")
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("sti", help="short-term instability run")
    _add_common(p, remote=True)
    p.add_argument("--level", type=float, default=750.0, metavar="W_M2")
    p.add_argument("--feedback", type=_feedback_type, default=True,
                   metavar="ON|OFF")
    p.add_argument("--duration", type=float, default=180.0, metavar="S")
    p.add_argument("--cadence", type=float, default=1.0, metavar="S")
    p.set_defaults(func=cmd_sti)

    p = subs.add_parser("lti", help="long-term instability run")
    _add_common(p, remote=True)
    p.add_argument("--level", type=float, default=500.0, metavar="W_M2")
    p.add_argument("--feedback", type=_feedback_type, default=True,
                   metavar="ON|OFF")
    p.add_argument("--samples", type=int, default=140, metavar="N")
    p.add_argument("--interval", type=float, default=1800.0, metavar="S")
    p.set_defaults(func=cmd_lti)

    p = subs.add_parser("serve", help="expose the twin over SCPI")
    _add_common(p)
    p.add_argument("--bind", default="127.0.0.1", metavar="HOST")
    p.add_argument("--port", type=int, default=DEFAULT_PORT, metavar="N",
                   help=f"TCP port (default {DEFAULT_PORT}, 0 = ephemeral)")
    p.add_argument("--stdio", action="store_true",
                   help="serve one session on stdin/stdout instead of TCP")
    p.set_defaults(func=cmd_serve)

    p = subs.add_parser("export-spectrum",
                        help="write the board spectrum at a level as CSV")
    _add_common(p)
    p.add_argument("level", type=float, help="total irradiance in W/m^2")
    p.set_defaults(func=cmd_export_spectrum)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Unachievable as exc:
        print(f"unachievable: {exc}", file=sys.stderr)
        return EXIT_BELOW_TARGET
    except WireError as exc:
        print(f"remote failure: {exc}", file=sys.stderr)
        return EXIT_CONFIG_IO
    except (OSError, json.JSONDecodeError) as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return EXIT_CONFIG_IO
    except (KeyError, TypeError, ValueError) as exc:
        print(f"config failure: {exc}", file=sys.stderr)
        return EXIT_CONFIG_IO


if __name__ == "__main__":
    sys.exit(main())
