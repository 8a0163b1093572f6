"""Command line interface: ``niplab run|check|bench|cross <config>``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..errors import ConfigError
from .config import ScenarioConfig, bundled_configs, load_config
from .runner import (
    EXIT_CONFIG,
    EXIT_OK,
    benchmark_metric_routes,
    cross_check,
    run,
    write_bench,
    write_report,
)

OUT_ENV = "NIPLAB_OUT"
log = logging.getLogger("niplab")


def _parse_dims(text: str) -> list[int]:
    try:
        dims = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--dims expects comma-separated integers, got {text!r}") from None
    if not dims or any(d < 2 for d in dims):
        raise argparse.ArgumentTypeError("--dims entries must be integers >= 2")
    return dims


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="niplab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("config", help=f"YAML path or bundled name ({', '.join(bundled_configs())})")
        sp.add_argument("--dt", type=float, default=None, help="override grid.dt")
        if out:
            sp.add_argument("--out", type=Path, default=None,
                            help=f"output directory (default ${OUT_ENV} or ./niplab-out)")
            sp.add_argument("--strict", action="store_true",
                            help="enable every known check at its default tolerance")

    common(sub.add_parser("run", help="run a scenario and write CSV + summary"))
    common(sub.add_parser("check", help="validate a config without running it"), out=False)
    b = sub.add_parser("bench", help="operator-ODE vs basis-propagation metric benchmark")
    common(b)
    b.add_argument("--dims", type=_parse_dims, default=[2, 4, 8, 16])
    common(sub.add_parser("cross", help="textbook vs non-Hermitian picture cross-check"))
    return p


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUT_ENV, "niplab-out"))


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if args.dt is not None:
        cfg = cfg.with_dt(args.dt)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "check":
        try:
            if hasattr(cfg.model, "build"):
                cfg.model.build()
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"{cfg.name}: ok ({cfg.kind}, {cfg.grid.n_steps} steps)")
        return EXIT_OK

    out = _out_dir(args)
    if args.command == "bench":
        try:
            rows = benchmark_metric_routes(cfg, args.dims)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        path = out / f"{cfg.prefix or cfg.name}.bench.csv"
        write_bench(rows, path)
        for r in rows:
            print(f"N={r.n:<4d} {r.route:<20s} {r.wall_time:9.4f} s  "
                  f"dev={r.max_deviation:.2e}  {'ok' if r.valid else 'INVALID'}")
        print(f"wrote {path}")
        return EXIT_OK if all(r.valid for r in rows) else 1

    try:
        report = cross_check(cfg, args.strict) if args.command == "cross" else run(cfg, args.strict)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    csv_path, summary_path = write_report(report, out, cfg.prefix)
    if report.error:
        t = "" if report.error_time is None else f" at t={report.error_time:.6g}"
        print(f"{cfg.name}: numerical failure{t}: {report.error}")
    for name, c in report.checks.items():
        print(f"{'PASS' if c.passed else 'FAIL'} {name:<24s} max={c.value:.3e} tol={c.tolerance:.1e}")
    print(f"wrote {csv_path} and {summary_path}")
    return report.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
