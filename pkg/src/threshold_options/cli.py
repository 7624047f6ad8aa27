"""Command line: ``threshold-options solve|verify|simulate|sweep --config <path>``.

Exit codes: 0 success, 1 other error, 2 config error, 3 no interior
maximiser of h, 4 a verification condition failed, 5 simulation
flagged unreliable.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from .config import describe_keys, load_config, validate_config, with_value
from .errors import ConfigError
from .pipeline import COMMANDS, EXIT_CONFIG, cmd_simulate, cmd_verify, exit_code_for


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threshold-options",
        description="Optimal investment thresholds for one-dimensional diffusions.",
        epilog="config keys:\n" + describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "compute p*, h(p*) and V(p*; x0) by every available method",
        "verify": "check optimality conditions at p* (or --p-star)",
        "simulate": "Monte Carlo hitting discount and NPV against analytic values",
        "sweep": "re-solve across sweep.param and write a CSV table",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="problem configuration file")
        p.add_argument("--out", help="directory for the report (and sweep.csv); overrides output.dir")
        p.add_argument("--seed", type=_u64, help="overrides simulation.seed")
        p.add_argument("--p-star", type=float, dest="p_star", help="threshold to verify or simulate instead of the solved p*")
        p.add_argument("--timings", action="store_true", help="append wall-clock seconds per stage to the report")
    return parser


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = with_value(cfg, "simulation.seed", args.seed)
        validate_config(cfg)
        if args.command == "verify":
            report = cmd_verify(cfg, args.p_star)
        elif args.command == "simulate":
            report = cmd_simulate(cfg, args.p_star)
        else:
            if args.p_star is not None:
                raise ConfigError("--p-star", f"not used by {args.command}")
            report = COMMANDS[args.command](cfg)
    except Exception as exc:
        where = getattr(exc, "stage", "config" if isinstance(exc, ConfigError) else None)
        prefix = f"error [{where}]" if where else "error"
        print(f"{prefix}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)

    text = report.render(include_timings=args.timings)
    out_dir = args.out if args.out is not None else cfg.output_dir
    if out_dir is not None:
        try:
            os.makedirs(out_dir, exist_ok=True)
            _write(os.path.join(out_dir, f"{args.command}_report.txt"), text)
            if report.table is not None:
                _write(os.path.join(out_dir, "sweep.csv"), report.table)
        except OSError as exc:
            print(f"error [output]: {exc}", file=sys.stderr)
            return 1
    if report.table is not None and out_dir is None:
        sys.stdout.write(report.table)
    else:
        sys.stdout.write(text)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
