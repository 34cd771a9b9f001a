"""Desk-scale evaluation protocol: overlap metrics, negatives, ROC, timing.

A dataset is a line-oriented TSV manifest:

    label<TAB>group<TAB>template_path<TAB>search_path<TAB>x,y,w,h

``label`` is ``positive`` or ``negative``; ``group`` names the source
sequence (used when building negatives, which must come from a different
group); the box column holds the ground-truth rectangle in search-image
pixels, or ``-`` when there is none. Lines starting with ``#`` are skipped.

Conventions worth knowing:

* the success curve value at threshold 0 uses the right-limit (fraction of
  IoUs strictly above 0), so a run with no overlap at all scores AUC 0;
* response ROC-AUC is the Mann-Whitney rank statistic of per-entry mean
  responses, so it is invariant under any strictly monotone rescaling of a
  method's responses and needs no per-method normalization;
* timing covers matching only; decoding and feature extraction happen
  outside every timed span.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DEFAULT_ALPHA
from .features import (
    FeatureMap,
    Image,
    extract_raw_patches,
    load_feature_file,
    load_image,
)
from .matching import METHODS, MatchResult, match_feature_maps

__all__ = [
    "ManifestEntry",
    "EvalReport",
    "load_manifest",
    "save_manifest",
    "iou",
    "success_auc",
    "make_negatives",
    "response_roc",
    "evaluate_manifest",
    "bench",
]

Box = tuple[int, int, int, int]


@dataclass(frozen=True)
class ManifestEntry:
    label: str
    group: str
    template_path: str
    search_path: str
    box_px: Box | None

    def __post_init__(self):
        if self.label not in ("positive", "negative"):
            raise ValueError(f"label must be positive|negative, got {self.label!r}")
        if self.label == "positive" and self.box_px is None:
            raise ValueError("positive entries need a ground-truth box")


def load_manifest(path) -> list[ManifestEntry]:
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
        label, group, tpath, spath, box_str = parts
        box = None
        if box_str.strip() not in ("", "-"):
            nums = [int(v) for v in box_str.split(",")]
            if len(nums) != 4:
                raise ValueError(f"{path}:{lineno}: box must be x,y,w,h")
            box = tuple(nums)
        entries.append(ManifestEntry(label, group, tpath, spath, box))
    if not entries:
        raise ValueError(f"{path}: empty manifest")
    return entries


def save_manifest(entries: list[ManifestEntry], path) -> None:
    lines = []
    for e in entries:
        box = ",".join(str(v) for v in e.box_px) if e.box_px else "-"
        lines.append("\t".join([e.label, e.group, e.template_path, e.search_path, box]))
    Path(path).write_text("\n".join(lines) + "\n")


def iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two (x, y, w, h) rectangles; 0 if disjoint."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if min(aw, ah, bw, bh) < 0:
        raise ValueError(f"negative box extent: {a} vs {b}")
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def success_auc(
    ious, thresholds: np.ndarray | None = None
) -> tuple[list[tuple[float, float]], float]:
    """Success curve over IoU thresholds and its trapezoidal area.

    ``curve(tau)`` is the fraction of IoUs >= tau; at tau == 0 the
    right-limit (strictly positive IoU) is used so total failure integrates
    to 0 while perfect overlap integrates to 1.
    """
    ious = np.asarray(list(ious), dtype=np.float64)
    if ious.size == 0:
        raise ValueError("no IoU values")
    if thresholds is None:
        thresholds = np.linspace(0.0, 1.0, 101)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    rates = (ious[None, :] >= thresholds[:, None]).mean(axis=1)
    if thresholds[0] == 0.0:
        rates[0] = (ious > 0.0).mean()
    curve = [(float(t), float(r)) for t, r in zip(thresholds, rates)]
    auc = float(np.trapezoid(rates, thresholds))
    return curve, auc


def response_roc(records) -> float:
    """ROC-AUC of mean responses against labels via the rank statistic.

    ``records`` is an iterable of (mean_response, label) with labels
    ``positive``/``negative``; ties get half credit.
    """
    pos, neg = [], []
    for resp, label in records:
        (pos if label == "positive" else neg).append(float(resp))
    if not pos or not neg:
        raise ValueError("response_roc needs both positive and negative entries")
    pos_a, neg_a = np.array(pos), np.array(neg)
    wins = (pos_a[:, None] > neg_a[None, :]).sum()
    ties = (pos_a[:, None] == neg_a[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))


def make_negatives(
    entries: list[ManifestEntry], seed: int, out_dir
) -> list[ManifestEntry]:
    """Pair every positive with a negative whose template comes from elsewhere.

    For each positive entry a donor entry is drawn (seeded) from a different
    group, a template-sized region is cropped from the donor's search image
    at a random position, and saved under ``out_dir``. The returned manifest
    holds the positives followed by one negative each (same search image, no
    ground-truth box), so it is exactly twice the positive count.
    """
    positives = [e for e in entries if e.label == "positive"]
    groups = sorted({e.group for e in entries})
    if len(groups) < 2:
        raise ValueError("need at least 2 groups to build cross-group negatives")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    by_group: dict[str, list[ManifestEntry]] = {}
    for e in entries:
        by_group.setdefault(e.group, []).append(e)

    out = list(positives)
    for idx, pos in enumerate(positives):
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        donor_group = str(rng.choice([g for g in groups if g != pos.group]))
        donor = by_group[donor_group][int(rng.integers(len(by_group[donor_group])))]

        tmpl = load_image(pos.template_path)
        frame = load_image(donor.search_path)
        if frame.width < tmpl.width or frame.height < tmpl.height:
            raise ValueError(
                f"donor frame {donor.search_path} smaller than template "
                f"{tmpl.width}x{tmpl.height}"
            )
        x = int(rng.integers(frame.width - tmpl.width + 1))
        y = int(rng.integers(frame.height - tmpl.height + 1))
        crop = Image(frame.pixels[y : y + tmpl.height, x : x + tmpl.width])
        crop_path = out_dir / f"neg_{idx:04d}.png"
        _save_png(crop, crop_path)
        out.append(
            ManifestEntry("negative", donor_group, str(crop_path), pos.search_path, None)
        )
    return out


def _save_png(img: Image, path) -> None:
    from PIL import Image as PILImage

    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    PILImage.fromarray(arr).save(path)


def _features_for(
    path: str, mode: str, patch: int, stride: int, normalize: bool
) -> FeatureMap:
    if mode == "ftm":
        return load_feature_file(path)
    return extract_raw_patches(load_image(path), patch, stride, normalize)


@dataclass
class EvalReport:
    """Per-entry scores plus the aggregate curves of one evaluation run."""

    method: str
    alpha: float
    entries: list[dict] = field(default_factory=list)
    success_curve: list[tuple[float, float]] = field(default_factory=list)
    auc: float = 0.0
    roc_auc: float | None = None
    timing_mean_s: float = 0.0
    timing_std_s: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "entries": self.entries,
            "success_curve": [[t, r] for t, r in self.success_curve],
            "auc": self.auc,
            "roc_auc": self.roc_auc,
            "timing": {"mean_s": self.timing_mean_s, "std_s": self.timing_std_s},
        }


def evaluate_manifest(
    entries: list[ManifestEntry],
    method: str = "qatm",
    alpha: float = DEFAULT_ALPHA,
    features: str = "raw",
    patch: int = 8,
    stride: int = 8,
    normalize: bool = True,
    workers: int = 1,
) -> tuple[EvalReport, list[MatchResult]]:
    """Run one method over a manifest and aggregate the protocol metrics.

    Returns the report and the per-entry MatchResults (manifest order) so
    callers can export response heatmaps.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    report = EvalReport(method=method, alpha=alpha)
    results: list[MatchResult] = []
    pos_ious: list[float] = []
    labelled: list[tuple[float, str]] = []

    for e in entries:
        tmap = _features_for(e.template_path, features, patch, stride, normalize)
        smap = _features_for(e.search_path, features, patch, stride, normalize)
        res = match_feature_maps(tmap, smap, method=method, alpha=alpha, workers=workers)
        results.append(res)

        entry_iou = None
        if e.box_px is not None:
            entry_iou = iou(res.window_px, e.box_px)
            if e.label == "positive":
                pos_ious.append(entry_iou)
        labelled.append((res.mean_response, e.label))
        report.entries.append(
            {
                "template": e.template_path,
                "search": e.search_path,
                "label": e.label,
                "box_px": list(res.window_px),
                "score": res.score,
                "mean_response": res.mean_response,
                "iou": entry_iou,
                "elapsed_ms": res.elapsed_ms,
            }
        )

    if pos_ious:
        report.success_curve, report.auc = success_auc(pos_ious)
    labels = {lab for _, lab in labelled}
    if labels == {"positive", "negative"}:
        report.roc_auc = response_roc(labelled)
    times = np.array([r.elapsed_ms for r in results]) / 1000.0
    report.timing_mean_s = float(times.mean())
    report.timing_std_s = float(times.std(ddof=1)) if times.size > 1 else 0.0
    return report, results


def bench(
    method: str,
    entries: list[ManifestEntry],
    repetitions: int,
    alpha: float = DEFAULT_ALPHA,
    features: str = "raw",
    patch: int = 8,
    stride: int = 8,
    workers: int = 1,
) -> dict:
    """Per-sample matching time for one method over a manifest.

    All features are extracted up front; only ``match_feature_maps`` sits in
    the timed span, mirroring a per-sample cost that excludes feature
    extraction. Returns mean/std seconds per sample over all
    (entry, repetition) runs.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    pairs = [
        (
            _features_for(e.template_path, features, patch, stride, True),
            _features_for(e.search_path, features, patch, stride, True),
        )
        for e in entries
    ]
    samples = []
    for _ in range(repetitions):
        for tmap, smap in pairs:
            t0 = time.perf_counter()
            match_feature_maps(tmap, smap, method=method, alpha=alpha, workers=workers)
            samples.append(time.perf_counter() - t0)
    arr = np.array(samples)
    return {
        "method": method,
        "repetitions": repetitions,
        "n_samples": len(samples),
        "mean_s": float(arr.mean()),
        "std_s": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
    }
