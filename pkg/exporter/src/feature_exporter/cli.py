"""feature-exporter command line.

    feature-exporter export --image photo.png --out photo.ftm \
        [--layers relu1_2+relu3_4] [--weights pretrained|random] [--seed N] \
        [--resize WxH]

Exits 0 on success; prints a one-line diagnostic and exits 1 on any error
(including an unavailable pretrained checkpoint).
"""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportConfig, export_features
from .vgg import DEFAULT_LAYERS


def _parse_resize(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return (w, h)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feature-exporter", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    e = sub.add_parser("export", help="image to FTM1 feature file")
    e.add_argument("--image", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--layers", default=DEFAULT_LAYERS,
                   help="plus-joined VGG19 activation names (default %(default)s)")
    e.add_argument("--weights", choices=("pretrained", "random"), default="pretrained")
    e.add_argument("--seed", type=int, default=0, help="init seed for --weights random")
    e.add_argument("--resize", type=_parse_resize, default=None, metavar="WxH")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = ExportConfig(
        image=args.image,
        out=args.out,
        layers=args.layers,
        weights=args.weights,
        seed=args.seed,
        resize=args.resize,
    )
    try:
        summary = export_features(cfg)
    except Exception as exc:
        print(f"feature-exporter: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
