"""Command-line entry point: ``birthgrowth {validate-config,run,report,list-checks}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from ..errors import ConfigError
from . import report
from .checks import CHECKS, NEGATIVE_CAPABLE
from .config import load

EXIT_CONFIG = 2


def shipped_configs() -> dict[str, Path]:
    root = resources.files("birthgrowth.harness") / "configs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml")}


def resolve_config(arg: str) -> Path:
    """A path, or the bare name of a shipped configuration."""
    p = Path(arg)
    if p.exists():
        return p
    shipped = shipped_configs()
    if arg in shipped:
        return shipped[arg]
    raise ConfigError(f"no such file or shipped config: {arg} (shipped: {', '.join(sorted(shipped))})")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="birthgrowth", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="verb", required=True)

    v = sub.add_parser("validate-config", help="parse and validate a config without sampling")
    v.add_argument("--config", required=True, metavar="PATH")

    r = sub.add_parser("run", help="build the ensemble, run checks, write reports")
    r.add_argument("--config", required=True, metavar="PATH")
    r.add_argument("--seed", type=int, metavar="N", help="override experiment.seed")
    r.add_argument("--threads", type=int, metavar="N", help="worker processes for ensemble work")
    r.add_argument("--out", metavar="DIR", help="override experiment.output")
    r.add_argument("--check", action="append", metavar="NAME", choices=sorted(CHECKS), help="run only these (repeatable)")
    r.add_argument("--negative-controls", action="store_true", help="also run the config's negative controls")

    p = sub.add_parser("report", help="re-render plots from stored tables")
    p.add_argument("--out", metavar="DIR", help="report directory")
    p.add_argument("--config", metavar="PATH", help="take the report directory from this config")

    sub.add_parser("list-checks", help="list available identity checks")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.verb == "list-checks":
        for name, fn in CHECKS.items():
            tag = "  [negative control capable]" if name in NEGATIVE_CAPABLE else ""
            print(f"{name:24s} {fn.__doc__.strip().splitlines()[0].replace('``', '')}{tag}")
        print("shipped configs: " + ", ".join(sorted(shipped_configs())))
        return 0

    try:
        if args.verb == "validate-config":
            cfg = load(resolve_config(args.config))
            print(f"ok {cfg.name} fingerprint={cfg.fingerprint} n={cfg.n} kind={cfg.model.kind} growth={cfg.growth.kind}")
            return 0
        if args.verb == "report":
            if args.out:
                out = Path(args.out)
            elif args.config:
                out = load(resolve_config(args.config)).output
            else:
                raise ConfigError("report needs --out or --config")
            if not out.is_dir():
                raise ConfigError(f"no report directory {out}")
            for path in report.render(out):
                print(path)
            return 0
        cfg = load(resolve_config(args.config), seed=args.seed, output=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .runner import run_experiment

    summary, status = run_experiment(
        cfg, cfg.output, checks=args.check, negative_controls=args.negative_controls, workers=args.threads
    )
    for c in summary["checks"]:
        tag = " (negative control)" if c["negative_control"] else ""
        print(f"{c['name']:24s} {c['verdict']}{tag}")
    print(json.dumps({"fingerprint": summary["fingerprint"], "exit_status": status, "output": str(cfg.output)}))
    return status


if __name__ == "__main__":
    sys.exit(main())
