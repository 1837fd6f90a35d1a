"""Command line entry points.

    geowatt run      serve the live pipeline plus the HTTP API
    geowatt replay   drive a scripted scenario and print its report
    geowatt analyze  statistics over a meter reading CSV
    geowatt report   pretty-print a saved replay report
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path

from . import analytics
from .config import build_fleet, load_config, reference_config
from .devicenet import FleetServer, SocketLink
from .errors import ConfigError, ValidationError
from .runtime import (
    ApiServer,
    Runtime,
    SimClock,
    WallClock,
    load_script,
    play_script,
    reference_day_script,
    run_replay,
    save_script,
)

log = logging.getLogger(__name__)


def _load(config_path: str | None):
    if config_path is None:
        return reference_config()
    return load_config(config_path)


def _cmd_run(args) -> int:
    config = _load(args.config)
    script = None
    if args.play:
        script = reference_day_script() if args.play == "reference-day" else load_script(args.play)
    # a played scenario pins the clock to its own timeline; live runs track wall time
    clock = SimClock(script.start) if script else WallClock()
    fleet = build_fleet(config, clock.now())
    server = FleetServer(fleet, port=args.fleet_port)
    server.start()
    link = SocketLink("127.0.0.1", server.port)
    runtime = Runtime(config, clock, fleet=fleet, link=link, log_path=args.log)
    if script is not None:
        play_script(runtime, script)
        print(f"played scenario {script.name!r} ({script.start} .. {script.end})")
    api = ApiServer(runtime, host=args.host, port=args.port, static_dir=args.dashboard)
    print(f"deployment {config.name!r}: api on {args.host}:{api.port}, "
          f"device wire on 127.0.0.1:{server.port}", flush=True)
    try:
        api.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        api.stop()
        runtime.close()
        server.stop()
    return 0


def _cmd_replay(args) -> int:
    config = _load(args.config)
    if args.script == "reference-day":
        script = reference_day_script()
    else:
        script = load_script(args.script)
    if args.emit_script:
        save_script(script, args.emit_script)
        print(f"wrote {args.emit_script}")
        return 0
    runtime, report = run_replay(
        config,
        script,
        speedup=args.speedup,
        out_dir=args.out,
        use_socket=not args.in_process,
    )
    _print_report(report)
    if args.out:
        print(f"\nwrote report.json, report.csv, events.jsonl under {args.out}")
    return 0


def _print_report(report: dict) -> None:
    comparison = report["comparison"]
    print(f"scenario {report.get('scenario', '?')!r} "
          f"({report['window']['from']} .. {report['window']['to']})")
    for site in sorted(comparison["sites"]):
        row = comparison["sites"][site]
        print(f"\n[{site}] measured {row['actual_kwh']:.3f} kWh")
        for device, kwh in sorted(row["per_device_kwh"].items()):
            print(f"  {device:<16} {kwh:8.3f} kWh")
        for mode, m in sorted(row["modes"].items()):
            ratio = "n/a" if m["ratio"] is None else f"{m['ratio']:.4f}"
            print(f"  vs {mode:<12} baseline {m['estimate_kwh']:7.3f} kWh  ratio {ratio}")
    combined = comparison["combined"]
    print(f"\n[combined] measured {combined['actual_kwh']:.3f} kWh")
    for mode, m in sorted(combined["modes"].items()):
        ratio = "n/a" if m["ratio"] is None else f"{m['ratio']:.4f}"
        print(f"  vs {mode:<12} baseline {m['estimate_kwh']:7.3f} kWh  ratio {ratio}")


def _cmd_report(args) -> int:
    path = Path(args.dir) / "report.json"
    if not path.is_file():
        print(f"no report.json under {args.dir}", file=sys.stderr)
        return 1
    _print_report(json.loads(path.read_text(encoding="utf-8")))
    return 0


def _cmd_analyze(args) -> int:
    series = analytics.load_meter_csv(args.csv)
    hourly = {ch: analytics.resample_hourly(s) for ch, s in series.items()}
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def emit(name: str, text: str) -> None:
        if out is None:
            print(text, end="")
        else:
            (out / name).write_text(text, encoding="utf-8")
            print(f"wrote {out / name}")

    if args.what == "correlations":
        if args.pairs:
            pairs = []
            for spec in args.pairs:
                a, _, b = spec.partition("~")
                try:
                    pairs.append((analytics.Channel(a), analytics.Channel(b)))
                except ValueError:
                    print(f"error: unknown channel in pair {spec!r}", file=sys.stderr)
                    return 2
        else:
            present = sorted(hourly, key=lambda ch: ch.value)
            pairs = [(a, b) for i, a in enumerate(present) for b in present[i + 1 :]]
        rows = analytics.weekly_correlations(hourly, pairs=pairs)
        emit("correlations.csv", analytics.correlations_csv(rows))
    elif args.what == "daily":
        records = analytics.daily_aggregate(hourly)
        emit("daily.csv", analytics.daily_csv(records))
    elif args.what == "subsets":
        rows = analytics.split_subsets(hourly)
        emit("subsets.csv", analytics.subsets_csv(rows))
    else:  # regress
        fits = analytics.standard_fits(hourly)
        emit("regression.csv", analytics.regression_csv(fits))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geowatt")
    parser.add_argument("--verbose", action="store_true", help="log pipeline internals")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="serve the live pipeline")
    p.add_argument("--config", help="deployment YAML (default: bundled reference)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--fleet-port", type=int, default=0, help="device wire port (0 = ephemeral)")
    p.add_argument("--log", help="event log JSONL path")
    p.add_argument("--dashboard", help="directory of built dashboard files to serve at /")
    p.add_argument("--play", metavar="SCRIPT",
                   help="drive a scenario ('reference-day' or a YAML path) before serving")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("replay", help="run a scripted scenario")
    p.add_argument("script", help="script YAML path, or 'reference-day' for the bundled day")
    p.add_argument("--config", help="deployment YAML (default: bundled reference)")
    p.add_argument("--speedup", type=float, help="pace in real time at 1/N scale (default: no pacing)")
    p.add_argument("--out", help="directory for report.json, report.csv, events.jsonl")
    p.add_argument("--in-process", action="store_true",
                   help="skip the TCP hop to the device fleet")
    p.add_argument("--emit-script", help="write the script YAML here and exit")
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("analyze", help="statistics over meter readings")
    p.add_argument("csv", help="meter readings (timestamp,channel,value)")
    p.add_argument("what", choices=["correlations", "regress", "subsets", "daily"])
    p.add_argument("--pairs", nargs="*", help="channel pairs like electric_kwh~temp_f")
    p.add_argument("--out", help="directory for output CSVs (default: stdout)")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("report", help="pretty-print a saved replay report")
    p.add_argument("dir", help="directory holding report.json")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
