"""Command line: ``qrlsim-plots render curves|bars --in <files> --out <image>``.

Curve inputs are simulator curve.csv files; labels default to the parent
directory name and can be overridden positionally with --labels.  Bar inputs
are history CSVs: the first is the exact distribution, the rest empirical
(their labels default to the file stem with any ``history_`` prefix
stripped).
"""

from __future__ import annotations

import argparse
import sys

from .io import default_label, read_curve, read_history
from .render import render_history_bars, render_learning_curves


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qrlsim-plots")
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render a figure from CSV files")
    p_render.add_argument("kind", choices=["curves", "bars"])
    p_render.add_argument("--in", dest="inputs", nargs="+", required=True)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--labels", nargs="*", default=None)

    args = parser.parse_args(argv)
    if args.command != "render":
        return 2

    if args.kind == "curves":
        labels = args.labels or [None] * len(args.inputs)
        if len(labels) != len(args.inputs):
            parser.error("--labels must match --in count")
        curves = [read_curve(path, label) for path, label in zip(args.inputs, labels)]
        out = render_learning_curves(curves, args.out)
    else:
        if len(args.inputs) < 2:
            parser.error("bars need the exact CSV plus at least one empirical CSV")
        empirical_paths = args.inputs[1:]
        labels = args.labels or [None] * len(empirical_paths)
        if len(labels) != len(empirical_paths):
            parser.error("--labels must match the number of empirical files")
        exact = read_history(args.inputs[0])
        empiricals = {}
        for path, label in zip(empirical_paths, labels):
            if label is None:
                label = default_label(path).removeprefix("history_")
            empiricals[label] = read_history(path)
        out = render_history_bars(exact, empiricals, args.out)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
