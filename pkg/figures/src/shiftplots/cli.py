"""Command-line figure generation from study output CSVs."""

from __future__ import annotations

import argparse
import sys

from .plots import FigureJob, SchemaError, plot_boxplot, plot_rho_band


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftplots",
        description="Render figures from label-shift study CSV outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    band = sub.add_parser("rho-band", help="ratio curves with empirical bands")
    band.add_argument("--input", required=True, help="rho_curves.csv from a study run")
    band.add_argument("--output", required=True, help="image file (.png or .svg)")
    band.add_argument("--level", type=float, default=0.90, help="pointwise band level")
    band.add_argument("--title", default=None)

    box = sub.add_parser("boxplot", help="estimate distribution per estimator")
    box.add_argument("--input", required=True, help="raw_estimates.csv from a study run")
    box.add_argument("--output", required=True, help="image file (.png or .svg)")
    box.add_argument("--reference", type=float, default=None, help="true value line")
    box.add_argument("--estimators", default="", help="comma-separated subset")
    box.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "rho-band":
            result = plot_rho_band(
                FigureJob(args.input, "rho-band", args.output,
                          band_level=args.level, title=args.title)
            )
            for name, width in result.band_widths.items():
                print(f"{name}: mean band width {width:.4f}")
            if {"rho_tilde", "rho_hat"} <= set(result.band_widths):
                print(f"refined/consistent width ratio: {result.width_ratio():.4f}")
        else:
            subset = tuple(s.strip() for s in args.estimators.split(",") if s.strip())
            names = plot_boxplot(
                FigureJob(args.input, "boxplot", args.output,
                          reference=args.reference, estimators=subset, title=args.title)
            )
            print(f"drew {len(names)} estimator series: {', '.join(names)}")
        print(f"figure written to {args.output}")
        return 0
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
