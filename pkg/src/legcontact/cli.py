"""Command-line entry points: ``simulate``, ``sweep`` and ``calibrate``.

Each invocation writes into a fresh timestamped directory under ``--out``
together with the resolved configuration and a manifest.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import records
from .config import ConfigError, dump_config, load_config, with_seed
from .sensors import DegenerateData, calibrate_linear
from .simulator import SimulationError, evaluate_trace, parametric_sweep, run_scenario

log = logging.getLogger("legcontact")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 2


def _prepare(args, command):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    out_dir = records.make_run_dir(args.out, command)
    (out_dir / "config.yaml").write_text(dump_config(cfg))
    manifest = records.RunManifest(
        command=command,
        config_path=str(args.config),
        output_dir=str(out_dir),
        seeds={"scenario": cfg.scenario.seed},
        argv=list(args.argv),
    )
    return cfg, out_dir, manifest


def cmd_simulate(args) -> int:
    cfg, out_dir, manifest = _prepare(args, "simulate")
    t0 = time.perf_counter()
    try:
        trace = run_scenario(cfg.model, cfg.scenario)
    except SimulationError as exc:
        log.error("integration failed: %s", exc)
        manifest.timing_s["simulate"] = time.perf_counter() - t0
        manifest.write(out_dir / "manifest.json")
        return EXIT_FAILURE
    manifest.timing_s["simulate"] = time.perf_counter() - t0

    trace_path = out_dir / "trace.csv"
    records.write_trace_csv(trace, trace_path)
    manifest.record_output(trace_path)
    text = f"no contact phase in {cfg.scenario.name}\n"
    if trace.contact_active.any() and trace.detected[trace.contact_active].any():
        text = records.format_report(evaluate_trace(trace), cfg.scenario)
    report_path = out_dir / "report.txt"
    report_path.write_text(text)
    manifest.record_output(report_path)
    manifest.timing_s["total"] = time.perf_counter() - t0
    manifest.write(out_dir / "manifest.json")
    print(text, end="")
    log.info("outputs in %s", out_dir)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, out_dir, manifest = _prepare(args, "sweep")
    if cfg.sweep is None:
        raise ConfigError("sweep", "section required for the sweep command", source=str(args.config))
    t0 = time.perf_counter()
    try:
        result = parametric_sweep(cfg.model, cfg.sweep)
    except SimulationError as exc:
        log.error("integration failed: %s", exc)
        return EXIT_FAILURE
    manifest.timing_s["sweep"] = time.perf_counter() - t0
    sweep_path = out_dir / "sweep.csv"
    records.write_sweep_csv(result, sweep_path)
    manifest.record_output(sweep_path)
    summary = records.format_sweep_summary(result)
    summary_path = out_dir / "summary.txt"
    summary_path.write_text(summary)
    manifest.record_output(summary_path)
    manifest.write(out_dir / "manifest.json")
    print(summary, end="")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    x, y = records.read_two_column(args.dataset)
    fit = calibrate_linear(x, y)
    out_dir = records.make_run_dir(args.out, "calibrate")
    fit_path = out_dir / "fit.json"
    fit_path.write_text(json.dumps(records.fit_to_dict(fit), indent=2) + "\n")
    manifest = records.RunManifest(
        command="calibrate", config_path=str(args.dataset), output_dir=str(out_dir), argv=list(args.argv)
    )
    manifest.record_output(fit_path)
    manifest.write(out_dir / "manifest.json")
    for name, value in records.fit_to_dict(fit).items():
        print(f"{name}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="legcontact", description="Leg contact estimation simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="runs", help="parent directory for run outputs (default: runs)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario noise seed")

    p = sub.add_parser("simulate", parents=[common], help="run one scenario")
    p.add_argument("--config", required=True, help="YAML file or bundled config name")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="configuration sweep")
    p.add_argument("--config", default="sweep", help="YAML file or bundled config name (default: sweep)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", parents=[common], help="fit a line to a two-column dataset")
    p.add_argument("dataset", help="comma or whitespace separated x, y file")
    p.add_argument("--config", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_BAD_INPUT
    except DegenerateData as exc:
        log.error("degenerate data: %s", exc)
        return EXIT_BAD_INPUT
    except (FileNotFoundError, PermissionError, IsADirectoryError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_BAD_INPUT
    except OSError as exc:
        log.error("cannot write outputs: %s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
