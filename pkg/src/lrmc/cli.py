"""Command-line entry point.

    mc phase|convergence|noise|verify --config <file> --out <dir> [--seed N] [--threads N]

Exit codes: 0 success, 1 verification violation, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .experiments import (
    load_config,
    run_convergence,
    run_noise,
    run_phase,
    run_verify,
)

_RUNNERS = {
    "phase": run_phase,
    "convergence": run_convergence,
    "noise": run_noise,
    "verify": run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mc",
        description="Matrix completion experiment harness (seeded, CSV outputs).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", required=True, help="flat key=value config file")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override master_seed")
        cmd.add_argument("--threads", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if config.experiment != args.command:
            raise ConfigError(
                f"config declares experiment={config.experiment!r}, "
                f"but the {args.command!r} command was invoked"
            )
        if args.seed is not None:
            config.master_seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    command = "mc " + " ".join(argv if argv is not None else sys.argv[1:])
    runner = _RUNNERS[args.command]
    result = runner(config, args.out, threads=args.threads, command=command)
    if args.command == "verify":
        if result != 0:
            print("verification FAILED; see violations.json", file=sys.stderr)
            return 1
        print("verification passed")
        return 0
    print(f"wrote {args.out}: {result}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
