"""Dense tensor kernels: pairwise cosine similarity, grouped softmax, grouped max.

These three kernels are the numerical core of the matcher. All math is done
in float64; inputs may be any real dtype. Every public function validates
that its inputs are finite and guarantees a finite result.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

__all__ = [
    "cosine_similarity_tensor",
    "grouped_softmax",
    "grouped_max",
]


def _as_finite_f64(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _normalize_axes(axes: Iterable[int], ndim: int) -> tuple[int, ...]:
    axes = tuple(sorted(a % ndim for a in axes))
    if not axes:
        raise ValueError("axis set must be non-empty")
    if len(set(axes)) != len(axes):
        raise ValueError(f"duplicate axes in {axes}")
    return axes


def cosine_similarity_tensor(t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """All-pairs cosine similarity between two feature grids.

    Parameters
    ----------
    t : ndarray, shape (Ht, Wt, L)
        Template feature grid.
    s : ndarray, shape (Hs, Ws, L)
        Search feature grid; must share the feature length L.

    Returns
    -------
    ndarray, shape (Ht, Wt, Hs, Ws)
        Entry (i, j, k, l) is the cosine similarity between template cell
        (i, j) and search cell (k, l). Zero-norm feature vectors yield
        similarity 0 (no information rather than NaN).
    """
    t = _as_finite_f64(t, "template features")
    s = _as_finite_f64(s, "search features")
    if t.ndim != 3 or s.ndim != 3:
        raise ValueError(f"expected H x W x L grids, got {t.shape} and {s.shape}")
    if t.shape[2] != s.shape[2]:
        raise ValueError(
            f"feature dimension mismatch: template L={t.shape[2]}, search L={s.shape[2]}"
        )

    tn = _unit_rows(t)
    sn = _unit_rows(s)
    rho = np.einsum("ijl,kml->ijkm", tn, sn, optimize=True)
    # Guard against 1 + ~1e-16 rounding so downstream exp() sees [-1, 1].
    np.clip(rho, -1.0, 1.0, out=rho)
    return rho


def _unit_rows(grid: np.ndarray) -> np.ndarray:
    """Scale feature vectors to unit norm; zero-norm vectors stay zero."""
    norms = np.linalg.norm(grid, axis=-1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return grid / safe


def grouped_softmax(x: np.ndarray, group_axes: Iterable[int], alpha: float) -> np.ndarray:
    """Temperature softmax normalized jointly over ``group_axes``.

    Each group is the slice of ``x`` obtained by varying the group axes with
    all other indices fixed; within a group the output is
    ``exp(alpha * x_i) / sum_j exp(alpha * x_j)``. Evaluated with the usual
    max-subtraction so large ``alpha * x`` cannot overflow.

    Raises
    ------
    ValueError
        If ``alpha <= 0``, the axis set is empty, or any group has no members.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    x = _as_finite_f64(x, "softmax input")
    axes = _normalize_axes(group_axes, x.ndim)
    shifted = x - x.max(axis=axes, keepdims=True)
    e = np.exp(alpha * shifted)
    return e / e.sum(axis=axes, keepdims=True)


def grouped_max(x: np.ndarray, reduce_axes: Iterable[int]) -> np.ndarray:
    """Maximum over ``reduce_axes``; the result keeps the remaining axes."""
    x = _as_finite_f64(x, "max input")
    axes = _normalize_axes(reduce_axes, x.ndim)
    return x.max(axis=axes)
