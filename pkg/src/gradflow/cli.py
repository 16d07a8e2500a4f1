"""Command-line interface: ``gradflow <command> --config <file>``.

Every command reads an optional flat ``key = value`` config file,
resolves it against per-command defaults, runs the study, and writes
CSV/SVG artifacts plus a manifest under the configured ``out_dir``.

Exit codes: 0 success; 2 config error; 3 data error (unreadable or
inconsistent dataset); 4 property violation (a bound or oracle check
failed); 1 unexpected error (traceback printed).
"""

from __future__ import annotations

import argparse
import sys
import traceback

from ._version import __version__
from .config import Config
from .errors import (
    BoundViolationError,
    ConfigError,
    DataError,
    IntegrityError,
    ParseError,
)
from .experiments import COMMANDS, run_experiment, spec_from_config

_COMMAND_HELP = {
    "grad-profile": "train each grid cell and record per-layer "
                    "similarity profiles of its best checkpoint",
    "depth-sweep": "mean test accuracy per (depth, c) cell, best "
                   "learning rate chosen by validation accuracy",
    "train-curves": "full-length training curves at a fixed learning "
                    "rate for each Lipschitz cap",
    "scatter": "similarity-versus-accuracy coordinates for every "
               "trained model in the grid",
    "bound-check": "evaluate both gradient-similarity bounds on "
                   "randomized linear instances",
    "oracle-test": "check analytic gradients against finite differences "
                   "and the closed-form expressions",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradflow",
        description="Deterministic training laboratory for deep graph "
                    "convolutional networks.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")
    for command in COMMANDS:
        cmd = sub.add_parser(command, help=_COMMAND_HELP[command],
                             description=_COMMAND_HELP[command])
        cmd.add_argument("--config", metavar="FILE", default=None,
                         help="flat 'key = value' config file; defaults "
                              "apply for missing keys")
        cmd.add_argument("--jobs", type=int, default=1, metavar="N",
                         help="run up to N grid cells concurrently "
                              "(default 1)")
        cmd.add_argument("--heavy", action="store_true",
                         help="allow depths beyond 128 and other "
                              "long-running settings")
        cmd.add_argument("--no-validate", action="store_true",
                         help="skip integrity checks when loading a "
                              "dataset directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = Config.from_file(args.config)
        else:
            cfg = Config({}, "<defaults>")
        spec = spec_from_config(args.command, cfg, heavy=args.heavy,
                                jobs=args.jobs,
                                validate=not args.no_validate)
        run_experiment(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, IntegrityError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except BoundViolationError as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return 4
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return 1
    print(f"done; artifacts under {spec.out_dir}/{spec.command}, "
          f"manifest at {spec.out_dir}/manifest.txt")
    return 0


if __name__ == "__main__":
    sys.exit(main())
