"""Minimal FTM1 writer.

FTM1 is the matching engine's feature container: 32-byte little-endian
header (magic "FTM1", version 1, H, W, L, stride_px, source_w, source_h as
u32) followed by H*W*L float32 values in row-major order, feature dimension
innermost. Writing it here, byte for byte, is the whole integration surface
with the engine; no engine code is imported.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4s7I")


def write_ftm(
    path, grid: np.ndarray, stride_px: int, source_size_px: tuple[int, int]
) -> None:
    """Write an (H, W, L) float grid as an FTM1 file."""
    if grid.ndim != 3 or grid.size == 0:
        raise ValueError(f"expected non-empty (H, W, L) grid, got shape {grid.shape}")
    if not np.isfinite(grid).all():
        raise ValueError("grid contains NaN or Inf")
    h, w, dim = grid.shape
    src_w, src_h = source_size_px
    if stride_px < 1 or h * stride_px > src_h or w * stride_px > src_w:
        raise ValueError(
            f"grid {h}x{w} at stride {stride_px} does not fit source {src_w}x{src_h}"
        )
    header = _HEADER.pack(b"FTM1", 1, h, w, dim, stride_px, src_w, src_h)
    payload = np.ascontiguousarray(grid, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)
