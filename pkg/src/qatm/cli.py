"""Command-line front end.

Subcommands:

* ``match``            locate a template in a search image, write JSON (+
                       optional PGM heatmaps)
* ``calibrate-alpha``  simulate the discernibility curve, write CSV
* ``evaluate``         run a manifest through one method, write a JSON report
* ``bench``            per-sample matching time over a manifest
* ``export-features``  raw-patch features of an image to an FTM1 file

Every command exits 0 on success; any error prints a one-line diagnostic
to stderr and exits 1 (2 for bad usage, from argparse).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import CalibrationConfig, calibrate_alpha
from .core import DEFAULT_ALPHA
from .evaluation import bench, evaluate_manifest, load_manifest
from .features import (
    extract_raw_patches,
    load_feature_file,
    load_image,
    save_feature_file,
    write_pgm,
)
from .matching import METHODS, match_feature_maps, qatm_quality_maps

__all__ = ["main"]


def _add_feature_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--features", choices=("raw", "ftm"), default="raw",
                   help="treat inputs as images (raw patches) or FTM1 feature files")
    p.add_argument("--patch", type=int, default=8, help="raw patch size in pixels")
    p.add_argument("--stride", type=int, default=8, help="raw patch stride in pixels")
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="skip per-patch mean/variance normalization of raw features")
    p.add_argument("--workers", type=int, default=1, help="CPU parallelism budget")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qatm", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("match", help="locate a template in a search image")
    m.add_argument("--template", help="template image (PNG/PGM/PPM)")
    m.add_argument("--search", help="search image")
    m.add_argument("--template-ftm", help="template features as FTM1 file")
    m.add_argument("--search-ftm", help="search features as FTM1 file")
    m.add_argument("--method", choices=METHODS, default="qatm")
    m.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    m.add_argument("--out", default=".", help="output directory")
    m.add_argument("--heatmaps", action="store_true", help="write response heatmaps as PGM")
    m.add_argument("--seed", type=int, default=0)
    _add_feature_args(m)

    c = sub.add_parser("calibrate-alpha", help="simulate the temperature discernibility curve")
    c.add_argument("--n-patches", type=int, default=2200)
    c.add_argument("--mu-plus", type=float, default=0.3)
    c.add_argument("--sigma-plus", type=float, default=0.1)
    c.add_argument("--mu-minus", type=float, default=0.0)
    c.add_argument("--sigma-minus", type=float, default=0.05)
    c.add_argument("--trials", type=int, default=200)
    c.add_argument("--grid", default="1:60:0.5", help="alpha grid as start:stop:step")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="CSV output path")

    e = sub.add_parser("evaluate", help="run a manifest through one method")
    e.add_argument("--manifest", required=True)
    e.add_argument("--method", choices=METHODS, default="qatm")
    e.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    e.add_argument("--report", required=True, help="JSON report path")
    e.add_argument("--heatmap-dir", help="also dump per-entry response maps as PGM")
    _add_feature_args(e)

    b = sub.add_parser("bench", help="time matching over a manifest")
    b.add_argument("--manifest", required=True)
    b.add_argument("--method", choices=METHODS, default="qatm")
    b.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    b.add_argument("--repetitions", type=int, required=True)
    _add_feature_args(b)

    x = sub.add_parser("export-features", help="raw-patch features to an FTM1 file")
    x.add_argument("--image", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--patch", type=int, default=8)
    x.add_argument("--stride", type=int, default=8)
    x.add_argument("--no-normalize", dest="normalize", action="store_false")
    x.add_argument("--grayscale", action="store_true", help="convert to luma before extraction")

    return parser


def _load_pair(args):
    if args.features == "ftm" or (args.template_ftm and args.search_ftm):
        t_path = args.template_ftm or args.template
        s_path = args.search_ftm or args.search
        if not t_path or not s_path:
            raise ValueError("ftm mode needs --template-ftm and --search-ftm (or --template/--search)")
        return load_feature_file(t_path), load_feature_file(s_path)
    if not args.template or not args.search:
        raise ValueError("raw mode needs --template and --search images")
    t = extract_raw_patches(load_image(args.template), args.patch, args.stride, args.normalize)
    s = extract_raw_patches(load_image(args.search), args.patch, args.stride, args.normalize)
    return t, s


def _cmd_match(args) -> int:
    tmap, smap = _load_pair(args)
    result = match_feature_maps(tmap, smap, method=args.method, alpha=args.alpha,
                                workers=args.workers)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "box_px": list(result.window_px),
        "box_grid": [result.window_grid.x, result.window_grid.y,
                     result.window_grid.w, result.window_grid.h],
        "score": result.score,
        "mean_response": result.mean_response,
        "method": result.method,
        "alpha": args.alpha,
        "elapsed_ms": result.elapsed_ms,
    }
    (out_dir / "result.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.heatmaps:
        if args.method == "qatm":
            s_map, t_map = qatm_quality_maps(tmap, smap, alpha=args.alpha, workers=args.workers)
            for name, values in (("s_map", s_map), ("t_map", t_map)):
                scale = write_pgm(values, out_dir / f"{name}.pgm")
                (out_dir / f"{name}.json").write_text(json.dumps(scale, sort_keys=True) + "\n")
        else:
            scale = write_pgm(result.response, out_dir / "response.pgm")
            (out_dir / "response.json").write_text(json.dumps(scale, sort_keys=True) + "\n")
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_calibrate(args) -> int:
    try:
        start, stop, step = (float(v) for v in args.grid.split(":"))
    except ValueError as exc:
        raise ValueError(f"bad --grid {args.grid!r}, expected start:stop:step") from exc
    cfg = CalibrationConfig(
        n_patches=args.n_patches,
        mu_plus=args.mu_plus,
        sigma_plus=args.sigma_plus,
        mu_minus=args.mu_minus,
        sigma_minus=args.sigma_minus,
        n_trials=args.trials,
        alpha_grid=np.arange(start, stop + 1e-9, step),
        rng_seed=args.seed,
    )
    result = calibrate_alpha(cfg)
    lines = ["alpha,discernibility"]
    lines += [f"{a:g},{v:.10g}" for a, v in result.discernibility_curve]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"alpha_star={result.alpha_star:g}")
    return 0


def _cmd_evaluate(args) -> int:
    entries = load_manifest(args.manifest)
    report, results = evaluate_manifest(
        entries, method=args.method, alpha=args.alpha, features=args.features,
        patch=args.patch, stride=args.stride, normalize=args.normalize,
        workers=args.workers,
    )
    Path(args.report).write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    if args.heatmap_dir:
        hdir = Path(args.heatmap_dir)
        hdir.mkdir(parents=True, exist_ok=True)
        for i, res in enumerate(results):
            scale = write_pgm(res.response, hdir / f"entry_{i:04d}.pgm")
            (hdir / f"entry_{i:04d}.json").write_text(json.dumps(scale, sort_keys=True) + "\n")
    print(f"auc={report.auc:.4f}" + (f" roc_auc={report.roc_auc:.4f}" if report.roc_auc is not None else ""))
    return 0


def _cmd_bench(args) -> int:
    entries = load_manifest(args.manifest)
    stats = bench(args.method, entries, args.repetitions, alpha=args.alpha,
                  features=args.features, patch=args.patch, stride=args.stride,
                  workers=args.workers)
    print(json.dumps(stats, sort_keys=True))
    return 0


def _cmd_export(args) -> int:
    img = load_image(args.image)
    if args.grayscale:
        img = img.to_grayscale()
    fmap = extract_raw_patches(img, args.patch, args.stride, args.normalize)
    save_feature_file(fmap, args.out)
    print(f"wrote {args.out}: {fmap.height}x{fmap.width}x{fmap.dim} stride {fmap.stride_px}")
    return 0


_COMMANDS = {
    "match": _cmd_match,
    "calibrate-alpha": _cmd_calibrate,
    "evaluate": _cmd_evaluate,
    "bench": _cmd_bench,
    "export-features": _cmd_export,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"qatm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
