"""End-to-end matching: features in, localized window out.

The pipeline is: pairwise cosine similarity, soft-ranking scores (or a
baseline scorer), response-map collapse, best-window search. Timing covers
exactly that span; feature extraction always happens outside.

``workers`` is the total CPU parallelism budget. With ``workers=1`` the
whole pipeline runs single-threaded (BLAS pools pinned to one thread).
With more workers the search grid is processed in row chunks by a thread
pool, again with BLAS pinned, so the worker count is the only source of
parallelism. Chunk boundaries and reduction order are fixed by the problem
size, not the worker count, so results are bitwise identical across
worker counts.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from .core import DEFAULT_ALPHA, likelihoods, quality_maps
from .features import FeatureMap
from .localize import MatchResult, Window, best_window, score_bupm, score_ncc, score_ssd
from .tensor_ops import cosine_similarity_tensor

__all__ = ["METHODS", "match_feature_maps"]

METHODS = ("qatm", "ssd", "ncc", "bupm")

# Rows per parallel chunk are sized so a chunk's similarity slab stays a
# few MB; fixed relative to the problem so worker count cannot change
# numerics.
_CHUNK_TARGET_ELEMENTS = 1 << 19


def match_feature_maps(
    template: FeatureMap,
    search: FeatureMap,
    method: str = "qatm",
    alpha: float = DEFAULT_ALPHA,
    workers: int = 1,
) -> MatchResult:
    """Locate the template-sized window of the search grid that matches best.

    For the soft-ranking scorer and the max-pooled baseline the response is
    a per-search-cell map and the window sum is maximized; for ssd/ncc the
    response is a per-placement map and the best placement wins. The
    returned pixel box always spans the template footprint at the search
    map's stride.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    if template.dim != search.dim:
        raise ValueError(
            f"feature dimension mismatch: template {template.dim}, search {search.dim}"
        )
    if template.height > search.height or template.width > search.width:
        raise ValueError("template grid larger than search grid")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    start = time.perf_counter()
    with threadpool_limits(limits=1):
        if method == "qatm":
            s_map, _ = _qatm_maps(template.data, search.data, alpha, workers)
            window, score = best_window(s_map, (template.width, template.height))
            response = s_map
            mean = score / (template.width * template.height)
        elif method == "bupm":
            rho = cosine_similarity_tensor(template.data, search.data)
            response = score_bupm(rho)
            window, score = best_window(response, (template.width, template.height))
            mean = score / (template.width * template.height)
        else:
            scorer = score_ssd if method == "ssd" else score_ncc
            response = scorer(template, search)
            flat = int(np.argmax(response))
            y, x = np.unravel_index(flat, response.shape)
            score = float(response[y, x])
            window = Window(x=int(x), y=int(y), w=template.width, h=template.height)
            mean = score
    elapsed_ms = (time.perf_counter() - start) * 1000.0

    st = search.stride_px
    return MatchResult(
        window_grid=window,
        window_px=(window.x * st, window.y * st, window.w * st, window.h * st),
        score=float(score),
        mean_response=float(mean),
        response=response,
        method=method,
        elapsed_ms=elapsed_ms,
    )


def qatm_quality_maps(
    template: FeatureMap,
    search: FeatureMap,
    alpha: float = DEFAULT_ALPHA,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """(s_map, t_map) response maps for two feature maps."""
    with threadpool_limits(limits=1):
        return _qatm_maps(template.data, search.data, alpha, workers)


def _qatm_maps(t: np.ndarray, s: np.ndarray, alpha: float, workers: int):
    if workers == 1:
        rho = cosine_similarity_tensor(t, s)
        return quality_maps(likelihoods(rho, alpha))
    return _qatm_maps_chunked(t, s, alpha, workers)


def _unit_cells(grid: np.ndarray) -> np.ndarray:
    flat = grid.reshape(-1, grid.shape[-1]).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    return flat / np.where(norms > 0.0, norms, 1.0)


def _qatm_maps_chunked(t: np.ndarray, s: np.ndarray, alpha: float, workers: int):
    """Row-chunked two-pass evaluation of both quality maps.

    Pass 1 computes each chunk's similarity slab, the template-side softmax
    (its groups are chunk-local), and partial max/sum statistics for the
    search-side softmax, whose groups span the whole search grid. Pass 2
    finishes the search-side normalization and collapses the maps.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    th, tw, L = t.shape
    sh, sw, _ = s.shape
    tn = _unit_cells(t)  # (Nt, L)
    sn = _unit_cells(s).reshape(sh, sw, L)
    nt = th * tw

    rows_per_chunk = max(1, _CHUNK_TARGET_ELEMENTS // max(1, nt * sw))
    bounds = list(range(0, sh, rows_per_chunk)) + [sh]
    n_chunks = len(bounds) - 1

    slabs: list[np.ndarray | None] = [None] * n_chunks  # exp(alpha*(rho - gmax))
    l_ts: list[np.ndarray | None] = [None] * n_chunks  # template-side softmax
    chunk_max = np.empty((n_chunks, nt))

    def pass1(c: int) -> None:
        lo, hi = bounds[c], bounds[c + 1]
        ns = (hi - lo) * sw
        rho = tn @ sn[lo:hi].reshape(ns, L).T  # (Nt, ns)
        np.clip(rho, -1.0, 1.0, out=rho)
        # template-side softmax: group = column
        shifted = alpha * (rho - rho.max(axis=0, keepdims=True))
        e = np.exp(shifted)
        l_ts[c] = e / e.sum(axis=0, keepdims=True)
        slabs[c] = rho
        chunk_max[c] = rho.max(axis=1)

    _run(pass1, n_chunks, workers)

    gmax = chunk_max.max(axis=0, keepdims=True).T  # (Nt, 1)
    chunk_sum = np.empty((n_chunks, nt))

    def pass2a(c: int) -> None:
        e = np.exp(alpha * (slabs[c] - gmax))
        slabs[c] = e
        chunk_sum[c] = e.sum(axis=1)

    _run(pass2a, n_chunks, workers)

    z = chunk_sum.sum(axis=0)[:, None]  # fixed chunk-order reduction
    s_map = np.empty(sh * sw)
    tmap_partial = np.empty((n_chunks, nt))

    def pass2b(c: int) -> None:
        lo, hi = bounds[c], bounds[c + 1]
        q = (slabs[c] / z) * l_ts[c]
        s_map[lo * sw : hi * sw] = q.max(axis=0)
        tmap_partial[c] = q.max(axis=1)

    _run(pass2b, n_chunks, workers)

    t_map = tmap_partial.max(axis=0).reshape(th, tw)
    return s_map.reshape(sh, sw), t_map


def _run(fn, n: int, workers: int) -> None:
    if workers == 1 or n == 1:
        for i in range(n):
            fn(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fn, range(n)))
