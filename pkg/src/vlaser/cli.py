"""Command line entry point ``vlaser``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import FORMATS, MODES, ConfigError, load_config
from .harness import SolverFailure, run
from .output import emit

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="vlaser", description="Mean-field V-level cavity laser toolkit.")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="run configuration file")
    ap.add_argument("--out", help="output file (default: config 'output', else stdout)")
    ap.add_argument("--format", choices=FORMATS, help="csv (default) or json")
    ap.add_argument("--workers", type=int, help="parallel worker processes")
    ap.add_argument("--seed", type=int, help="RNG seed for the symmetry-breaking field")
    ap.add_argument("--plot", action="store_true", help="also write PNG figures next to --out")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.mode)
        overrides = {k: v for k, v in (("output", args.out), ("format", args.format),
                                       ("workers", args.workers), ("seed", args.seed)) if v is not None}
        cfg = cfg.replace(**overrides)
        if args.plot and cfg.output is None:
            raise ConfigError("--plot needs an output file")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"vlaser: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        ds = run(cfg)
    except SolverFailure as exc:
        print(f"vlaser: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    text = emit(ds, cfg.format, cfg.output)
    if cfg.output is None:
        sys.stdout.write(text)
    if args.plot:
        from .plotting import plot_dataset

        for path in plot_dataset(ds, cfg.output):
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
