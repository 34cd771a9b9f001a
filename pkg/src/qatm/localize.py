"""Best-window localization and classic baseline scorers.

The matcher reduces to: build a per-cell response map, then find the
fixed-size window (the template's own footprint) whose response sum is
largest. The window search runs on a summed-area table, so all placements
cost O(H*W) after the table instead of O(H*W*window area).

Baselines share the same FeatureMap inputs so they are directly
comparable: sum-of-squared-differences and zero-mean normalized
correlation slide the whole template block, while the max-pooled
similarity scorer keeps only each search cell's best raw similarity,
ignoring how distinctive that match is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureMap
from .tensor_ops import cosine_similarity_tensor

__all__ = [
    "Window",
    "MatchResult",
    "best_window",
    "score_ssd",
    "score_ncc",
    "score_bupm",
    "similarity_for",
]

# Window sums within this relative distance of the best are treated as tied
# so float rounding cannot break the deterministic (y, x) tie-break.
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle in grid coordinates; (x, y) is the top-left."""

    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class MatchResult:
    """Outcome of one localization: where, how strong, and the full response.

    ``score`` is the response sum inside the chosen window;
    ``mean_response`` the per-cell average, comparable across window sizes.
    ``window_px`` maps the grid window to source pixels via the feature
    stride. ``elapsed_ms`` covers matching only (no feature extraction).
    """

    window_grid: Window
    window_px: tuple[int, int, int, int]
    score: float
    mean_response: float
    response: np.ndarray
    method: str
    elapsed_ms: float = 0.0


def best_window(values: np.ndarray, size: tuple[int, int]) -> tuple[Window, float]:
    """Placement of a w x h window maximizing the sum of map values.

    ``size`` is (w, h) in grid cells. Returns the winning Window and its
    sum. Ties (exact or within float rounding) resolve to the smallest y,
    then smallest x.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"quality map must be 2-D, got shape {values.shape}")
    w, h = size
    map_h, map_w = values.shape
    if w < 1 or h < 1:
        raise ValueError(f"window size must be positive, got {size}")
    if w > map_w or h > map_h:
        raise ValueError(f"window {w}x{h} larger than map {map_w}x{map_h}")

    # Summed-area table with a zero border: sat[i, j] = sum of values[:i, :j].
    sat = np.zeros((map_h + 1, map_w + 1))
    np.cumsum(np.cumsum(values, axis=0), axis=1, out=sat[1:, 1:])
    sums = sat[h:, w:] - sat[:-h, w:] - sat[h:, :-w] + sat[:-h, :-w]

    best = float(sums.max())
    tol = _TIE_RTOL * max(abs(best), 1.0)
    ties = np.flatnonzero(sums >= best - tol)
    y, x = np.unravel_index(int(ties[0]), sums.shape)  # row-major: min y, then x
    return Window(x=int(x), y=int(y), w=w, h=h), float(sums[y, x])


def _check_fits(t: FeatureMap, s: FeatureMap) -> None:
    if t.dim != s.dim:
        raise ValueError(f"feature dimension mismatch: template {t.dim}, search {s.dim}")
    if t.height > s.height or t.width > s.width:
        raise ValueError(
            f"template grid {t.height}x{t.width} larger than search {s.height}x{s.width}"
        )


def _placement_view(s: FeatureMap, t: FeatureMap) -> np.ndarray:
    """View of every template-sized block of the search grid.

    Shape (Hs-Ht+1, Ws-Wt+1, L, Ht, Wt); no copy.
    """
    return np.lib.stride_tricks.sliding_window_view(
        s.data, (t.height, t.width), axis=(0, 1)
    )


def score_ssd(t: FeatureMap, s: FeatureMap) -> np.ndarray:
    """Negated sum of squared feature differences per placement.

    Negated so that, like every other scorer here, larger means better;
    the exact-match placement attains the maximum value 0.
    """
    _check_fits(t, s)
    blocks = _placement_view(s, t)
    tmpl = np.moveaxis(t.data, 2, 0)  # (L, Ht, Wt) to line up with the view
    # sum (b - t)^2 = sum b^2 - 2 <b, t> + sum t^2
    cross = np.einsum("ykcij,cij->yk", blocks, tmpl, optimize=True)
    sq = np.einsum("ykcij,ykcij->yk", blocks, blocks, optimize=True)
    return -(sq - 2.0 * cross + float((t.data**2).sum()))


def score_ncc(t: FeatureMap, s: FeatureMap) -> np.ndarray:
    """Zero-mean normalized correlation of the whole template block.

    Template and each same-size search block are centered by their own
    mean (over all cells and feature components) and compared by cosine;
    scores lie in [-1, 1]. Zero-variance blocks score 0.
    """
    _check_fits(t, s)
    blocks = _placement_view(s, t)
    n = t.data.size
    tmpl = np.moveaxis(t.data, 2, 0) - t.data.mean()
    t_norm = float(np.sqrt((tmpl**2).sum()))

    b_sum = np.einsum("ykcij->yk", blocks, optimize=True)
    b_sq = np.einsum("ykcij,ykcij->yk", blocks, blocks, optimize=True)
    b_var = b_sq - b_sum**2 / n  # sum of squared deviations
    cross = np.einsum("ykcij,cij->yk", blocks, tmpl, optimize=True)  # tmpl sums to 0

    denom = t_norm * np.sqrt(np.maximum(b_var, 0.0))
    out = np.zeros_like(cross)
    np.divide(cross, denom, out=out, where=denom > 1e-12)
    return np.clip(out, -1.0, 1.0)


def score_bupm(rho: np.ndarray) -> np.ndarray:
    """Max raw similarity per search cell: response[k, l] = max over (i, j).

    The quality-blind baseline: a homogeneous template lights this map up
    just as brightly as a distinctive one, because only the single best
    similarity survives the pooling.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.ndim != 4 or rho.size == 0:
        raise ValueError(f"similarity tensor must be non-empty 4-D, got {rho.shape}")
    return rho.max(axis=(0, 1))


def similarity_for(t: FeatureMap, s: FeatureMap) -> np.ndarray:
    """Pairwise cosine similarity tensor for two feature maps."""
    _check_fits(t, s)
    return cosine_similarity_tensor(t.data, s.data)
