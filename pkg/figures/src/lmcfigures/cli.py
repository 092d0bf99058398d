"""Command-line front end: render figures from a spec file or from flags.

Two modes. ``--spec figures.toml`` renders every ``[[figure]]`` table in
the file; alternatively ``--kind``, ``--output`` and positional input
paths describe a single figure inline. Exit codes follow the runner's
convention: 0 on success, 2 for a spec or input-schema problem, 3 for an
I/O failure while writing.
"""

from __future__ import annotations

import argparse
import sys

from .render import render
from .spec import KINDS, FigureSpec, SchemaError, load_specs

__all__ = ["main"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmc-figures",
        description="regenerate benchmark figures from result CSVs and PGM images",
    )
    parser.add_argument(
        "inputs", nargs="*", help="input files or globs for a single figure"
    )
    parser.add_argument(
        "--spec", help="TOML file of [[figure]] tables; renders every entry"
    )
    parser.add_argument("--kind", choices=KINDS, help="figure kind for inline mode")
    parser.add_argument("--output", help="output image path (.png or .svg)")
    parser.add_argument("--title", default="", help="figure title")
    parser.add_argument(
        "--label",
        action="append",
        default=[],
        help="curve or panel label, repeatable, one per input file",
    )
    parser.add_argument(
        "--moment-order",
        type=int,
        default=2,
        help="summary row the sweep kinds plot",
    )
    parser.add_argument(
        "--burn-in",
        type=int,
        default=None,
        help="shaded prefix of a trajectory figure; default reads the config.toml echo",
    )
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.spec:
            if args.kind or args.output or args.inputs:
                raise SchemaError("--spec cannot be combined with inline figure flags")
            specs = load_specs(args.spec)
        else:
            if not (args.kind and args.output and args.inputs):
                raise SchemaError(
                    "either --spec or all of --kind, --output and input files are required"
                )
            specs = [
                FigureSpec(
                    kind=args.kind,
                    inputs=tuple(args.inputs),
                    output=args.output,
                    title=args.title,
                    labels=tuple(args.label),
                    moment_order=args.moment_order,
                    burn_in=args.burn_in,
                )
            ]
        for spec in specs:
            print(f"wrote {render(spec)}")
    except SchemaError as exc:
        print(f"figure spec error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"figure spec error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
