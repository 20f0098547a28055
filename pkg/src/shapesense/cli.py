"""Command-line entry point: ``shapesense {simulate,analyze,estimate,run,oracle}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .analysis import Diagnostics, write_samples
from .oracle import ORACLES, run_oracle
from .pipeline import (ConfigError, RunConfig, analyze, bundled_configs, dump_json, estimate_from_files, manifest,
                       run_pipeline, simulate, write_estimate)
from .simulator import read_traces, write_traces

OUT_ENV = "SHAPESENSE_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NO_SHAPE, EXIT_ORACLE = 0, 2, 3, 4


def _default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "shapesense-out"))


def _parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = _parse_set(args.set or [])
    if args.seed is not None:
        over["seed"] = args.seed
    if args.n_sensors is not None:
        over["fleet.n_s"] = args.n_sensors
    if over:
        try:
            cfg = cfg.with_overrides(**over)
        except KeyError as exc:
            raise ConfigError(f"unknown config field {exc.args[0]!r}") from None
    else:
        cfg.resolve_target()
    return cfg


def _shape_status(report: dict) -> int:
    shape = report["shape"]
    if shape["status"] == "error":
        print(f"error: {shape['message']}", file=sys.stderr)
        print(f"diagnostics: {json.dumps(shape['diagnostics'], sort_keys=True)}", file=sys.stderr)
        return EXIT_NO_SHAPE
    if shape["status"] == "none":
        print("error: NoConsistentShape: no length or angle clusters were adopted", file=sys.stderr)
        return EXIT_NO_SHAPE
    return EXIT_OK


def _summary(report: dict) -> None:
    for name in ("length", "angle"):
        for c in report[f"{name}_clusters"]:
            m = c["multiplicity"]
            print(f"{name:6s} {c['center']:12.5f}  count {c['count']:6d}  N {m if m is None else round(m, 3)}")
    shape = report["shape"]
    if shape["status"] == "ok":
        print(f"shape: {len(shape['lengths'])} edges, closure residual {shape['closure_residual']:.4g}, "
              f"ambiguous {shape['ambiguous']}")


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traces = simulate(cfg)
    dump_json(manifest(cfg), out / "manifest.json")
    write_traces(traces, out / "traces.csv", manifest(cfg))
    print(f"wrote {len(traces)} traces to {out / 'traces.csv'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    f = cfg.data["fleet"]
    traces = read_traces(args.traces, f["v"], f["dt"])
    samples = analyze(traces, cfg, Diagnostics())
    write_samples(samples, out / "samples.csv")
    print(f"wrote samples of {len(samples)} detecting traces to {out / 'samples.csv'}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    est = estimate_from_files(args.samples, cfg)
    report = write_estimate(est, cfg, out)
    _summary(report)
    return _shape_status(report)


def cmd_run(args) -> int:
    cfg = load_config(args)
    if args.write_traces:
        cfg = cfg.with_overrides(**{"output.write_traces": True})
    _, report = run_pipeline(cfg, Path(args.out))
    _summary(report)
    print(f"artifacts in {args.out}")
    return _shape_status(report)


def cmd_oracle(args) -> int:
    params = _parse_set(args.set or [])
    if args.seed is not None:
        params["seed"] = args.seed
    if args.n is not None:
        params["n"] = args.n
    try:
        res = run_oracle(args.kind, params)
    except TypeError as exc:
        raise ConfigError(f"bad oracle parameter: {exc}") from None
    print(res.report())
    return EXIT_OK if res.passed else EXIT_ORACLE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapesense", description="Estimate a convex target's shape from range traces.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_out=True):
        sp.add_argument("--config", help=f"JSON config file or bundled name ({', '.join(bundled_configs())})")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--n-sensors", type=int, dest="n_sensors")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config field by dotted key, e.g. noise.sigma=1e-4")
        if needs_out:
            sp.add_argument("--out", default=_default_out(), type=Path,
                            help=f"output directory (default ${OUT_ENV} or ./shapesense-out)")

    sp = sub.add_parser("simulate", help="generate distance traces")
    common(sp)
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("analyze", help="extract samples from a trace CSV")
    common(sp)
    sp.add_argument("traces", type=Path)
    sp.set_defaults(func=cmd_analyze)
    sp = sub.add_parser("estimate", help="estimate the shape from a samples CSV")
    common(sp)
    sp.add_argument("samples", type=Path)
    sp.set_defaults(func=cmd_estimate)
    sp = sub.add_parser("run", help="simulate, analyze and estimate in one go")
    common(sp)
    sp.add_argument("--write-traces", action="store_true")
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("oracle", help="run an independent validation check")
    sp.add_argument("kind", choices=ORACLES)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int, help="number of Monte Carlo draws or parameter sets")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
