"""Command-line entry point: ``fracdamp <subcommand> --config run.yaml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .config import EXPERIMENTS
from .errors import ConfigurationError, FracDampError
from .runner import compare, run, write_json

log = logging.getLogger("fracdamp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracdamp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    p = sub.add_parser("compare", help="relative differences between two report.json files")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", help="directory for diff.json")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _fail(exc: Exception, out_dir) -> int:
    code = getattr(exc, "exit_code", 1)
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "path", None):
        payload["path"] = exc.path
    if hasattr(exc, "residual"):
        payload["residual"] = exc.residual
    text = json.dumps(payload, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_json(Path(out_dir) / "error.json", payload)
        except OSError:
            pass
    return code


def _load_report(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read report {path}: {exc}", str(path)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = args.out
    try:
        if args.command == "compare":
            diff = compare(_load_report(args.report_a), _load_report(args.report_b))
            if out_dir:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                write_json(Path(out_dir) / "diff.json", diff)
            print(json.dumps(diff, indent=2, sort_keys=True))
            return 0
        cfg = config_mod.load(args.config, args.command)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        out_dir = cfg.out
        report = run(cfg, cfg.out, threads=args.threads)
        print(json.dumps({"experiment": cfg.experiment, "out": str(cfg.out),
                          "config_hash": report["config_hash"]}, sort_keys=True))
        return 0
    except FracDampError as exc:
        return _fail(exc, out_dir)


if __name__ == "__main__":
    sys.exit(main())
