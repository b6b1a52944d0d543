"""Command line entry: elimfigs render --spec figure.json --out fig.png"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .render import FigureSpec, SchemaError, render


def bundled_spec(name: str) -> dict:
    ref = resources.files("elimfigs").joinpath("specs", f"{name}.json")
    return json.loads(ref.read_text())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="elimfigs",
                                     description="render simulation figures")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure spec")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="figure spec JSON path")
    group.add_argument("--bundled", choices=("five_level_compare",
                                             "raman_density"),
                       help="use a bundled figure spec")
    p.add_argument("--out", default=None, help="override the output image path")
    p.add_argument("--base-dir", default=".",
                   help="directory the input CSV paths are relative to")
    p.add_argument("--dpi", type=int, default=150)

    args = parser.parse_args(argv)
    try:
        if args.spec:
            spec = FigureSpec.from_json(args.spec)
        else:
            spec = FigureSpec.from_dict(bundled_spec(args.bundled))
        if args.out:
            spec.output = args.out
        path = render(spec, base_dir=args.base_dir, dpi=args.dpi)
    except SchemaError as exc:
        print(json.dumps({"error": "SchemaError", "message": str(exc)}),
              file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
