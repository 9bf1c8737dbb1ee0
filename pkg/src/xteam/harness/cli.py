"""Command line entry point: run, validate, oracle, suite."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, XTeamError
from ..parallel import using_threads
from .config import validate_config
from .records import write_record

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("xteam")


def _print_config_error(path, exc: ConfigError) -> None:
    for line, msg in exc.errors:
        print(f"{path}:{line}: {msg}", file=sys.stderr)


def _load(path, seed):
    return validate_config(Path(path).read_text(), seed_override=seed)


def _run_one(path, args) -> int:
    from .experiments import run

    try:
        cfg = _load(path, args.seed)
    except ConfigError as exc:
        _print_config_error(path, exc)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with using_threads(args.threads):
            record = run(cfg)
    except ConfigError as exc:
        _print_config_error(path, exc)
        return EXIT_CONFIG
    except (XTeamError, ValueError, FloatingPointError) as exc:
        print(f"{path}: {cfg.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    outdir = write_record(record, args.outdir, args.format)
    for v in record.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {cfg.experiment}  {v.name}  value={v.value}  tol={v.tolerance}")
    print(f"record: {outdir / 'record.json'}")
    return EXIT_PASS if record.passed else EXIT_FAIL


def cmd_run(args) -> int:
    return _run_one(args.config, args)


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config, args.seed)
    except ConfigError as exc:
        _print_config_error(args.config, exc)
        return EXIT_CONFIG
    print(json.dumps(cfg.normalized(), sort_keys=True, indent=2))
    return EXIT_PASS


def cmd_oracle(args) -> int:
    from ..lqg import LqgSpec, build_operators, solve_open_loop
    from ..sde.grid import TimeGrid

    try:
        raw = json.loads(Path(args.spec).read_text())
        spec = LqgSpec.from_dict(raw.get("lqg", raw))
        K = int(args.steps or raw.get("K", 100))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"{args.spec}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with using_threads(args.threads):
            sol = solve_open_loop(build_operators(spec, TimeGrid(spec.T, K)))
    except XTeamError as exc:
        print(f"{args.spec}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(dict(sol.report(), K=K, N=spec.N), sort_keys=True))
    return EXIT_PASS


def cmd_suite(args) -> int:
    configs = sorted(Path(args.dir).glob("*.json"))
    if not configs:
        print(f"{args.dir}: no *.json configs", file=sys.stderr)
        return EXIT_CONFIG
    codes = {p.name: _run_one(p, args) for p in configs}
    for name, code in codes.items():
        print(f"{name}: exit {code}")
    return max(codes.values())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xteam", description="Exchangeable stochastic team experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--outdir", default="results", help="output root; records go to {outdir}/{tag}/{seed}/")
    common.add_argument("--format", choices=("csv", "jsonl"), default="jsonl", help="row output format")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one experiment config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("validate", parents=[common], help="parse and check a config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_validate)
    p = sub.add_parser("oracle", parents=[common], help="solve an LQG instance exactly")
    p.add_argument("spec")
    p.add_argument("--steps", type=int, default=None, help="time steps K (default: spec 'K' or 100)")
    p.set_defaults(fn=cmd_oracle)
    p = sub.add_parser("suite", parents=[common], help="run every *.json config in a directory")
    p.add_argument("dir")
    p.set_defaults(fn=cmd_suite)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("--threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
