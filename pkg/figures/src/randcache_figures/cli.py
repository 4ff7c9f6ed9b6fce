"""randcache-plot: render figures from campaign CSVs."""

from __future__ import annotations

import argparse
import sys

from .plots import KINDS, PlotSpec, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="randcache-plot",
        description="Render result figures from randcache CSVs")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        help="input campaign CSV (repeatable)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--analytic", help="closed-form curve CSV to overlay")
    parser.add_argument("--metric", choices=["llc_accesses", "llc_demand_evictions"],
                        default="llc_accesses",
                        help="budget axis for search-success figures")
    args = parser.parse_args(argv)
    spec = PlotSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                    analytic=args.analytic,
                    options={"metric": args.metric})
    try:
        render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
