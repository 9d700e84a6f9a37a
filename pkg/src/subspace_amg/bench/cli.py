"""``subspace-amg`` command line entry point.

Exit codes: 0 on success, 1 on a validation error (bad config, missing
inputs, failed property checks), 2 on a runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError
from . import commands
from .config import load_config
from .verify import run_all

log = logging.getLogger("subspace_amg")

COMMANDS = {
    "gen": commands.cmd_gen,
    "train": commands.cmd_train,
    "energy": commands.cmd_energy,
    "bench": commands.cmd_bench,
    "ablate": commands.cmd_ablate,
}

# shorthand flags mapped onto config keys
FLAG_KEYS = ("family", "N", "K", "out_dir", "methods", "ranks", "epochs", "train_size",
             "test_size", "seed")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subspace-amg",
                                description="Learned coarse spaces for two-level PCG.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", help="INI file with an [experiment] section")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        for key in FLAG_KEYS:
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
        if name == "verify":
            sp.add_argument("--verify-seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            failed = 0
            for check in run_all(args.verify_seed):
                print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.detail}")
                failed += not check.passed
            return 1 if failed else 0
        overrides = list(args.set)
        overrides += [f"{k}={getattr(args, k)}" for k in FLAG_KEYS if getattr(args, k) is not None]
        config = load_config(args.config, overrides)
        commands.worker_count()
        COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
