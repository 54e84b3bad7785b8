"""Command line: render one figure from flags, or a batch from a YAML spec.

The YAML form is a list of figure entries:

    - kind: dynamic
      inputs: [runs/dynamic/metrics.csv]
      output: figs/dynamic.png
      title: Adaptation
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .figures import FIGURE_KINDS, FigureSpec, render


def specs_from_yaml(path) -> list:
    payload = yaml.safe_load(open(path))
    if not isinstance(payload, list):
        raise ValueError("figure spec file must be a YAML list of entries")
    specs = []
    for i, entry in enumerate(payload):
        if not isinstance(entry, dict):
            raise ValueError(f"entry {i} is not a mapping")
        specs.append(
            FigureSpec(
                kind=entry.get("kind"),
                inputs=entry.get("inputs", []),
                output=entry.get("output"),
                labels=entry.get("labels"),
                title=entry.get("title"),
            )
        )
    return specs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teamplots", description="Render figures from experiment CSVs."
    )
    parser.add_argument("--spec", help="YAML list of figures to render")
    parser.add_argument("--kind", choices=FIGURE_KINDS)
    parser.add_argument("--input", action="append", dest="inputs", default=[])
    parser.add_argument("--output")
    parser.add_argument("--labels", help="comma-separated labels, one per input")
    parser.add_argument("--title")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.spec:
            specs = specs_from_yaml(args.spec)
        else:
            if not (args.kind and args.inputs and args.output):
                raise ValueError(
                    "either --spec or all of --kind/--input/--output are required"
                )
            specs = [
                FigureSpec(
                    kind=args.kind,
                    inputs=args.inputs,
                    output=args.output,
                    labels=args.labels.split(",") if args.labels else None,
                    title=args.title,
                )
            ]
        for spec in specs:
            out = render(spec)
            print(f"wrote {out}")
    except Exception as exc:
        print(f"[render] error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
