"""Feature grids, raw-patch extraction, and the FTM1 feature-file format.

The matcher itself never touches pixels: it consumes FeatureMap grids. A
grid can come from anywhere -- the built-in raw-patch extractor below, or a
deep network whose activations were dumped to an FTM1 file by an external
tool. FTM1 is deliberately tiny (32-byte header + float32 payload) so any
producer can emit it without pulling in a tensor library.

FTM1 layout, little-endian:

    bytes  0-3   magic "FTM1"
    bytes  4-7   version, u32, currently 1
    bytes  8-11  H (grid rows), u32
    bytes 12-15  W (grid cols), u32
    bytes 16-19  L (feature length), u32
    bytes 20-23  stride_px, u32
    bytes 24-27  source image width in pixels, u32
    bytes 28-31  source image height in pixels, u32
    then H*W*L float32 values, row-major (W fastest spatially, L innermost)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Image",
    "FeatureMap",
    "FeatureFileError",
    "BadMagicError",
    "TruncatedPayloadError",
    "DimensionOverflowError",
    "load_image",
    "extract_raw_patches",
    "save_feature_file",
    "load_feature_file",
    "write_pgm",
]

_MAGIC = b"FTM1"
_VERSION = 1
_HEADER = struct.Struct("<4s7I")
# Refuse to allocate for absurd headers before trusting the payload length.
_MAX_ELEMENTS = 1 << 31


class FeatureFileError(ValueError):
    """Malformed or unreadable FTM1 file."""


class BadMagicError(FeatureFileError):
    """File does not start with the FTM1 magic."""


class TruncatedPayloadError(FeatureFileError):
    """Payload shorter than the header promises."""


class DimensionOverflowError(FeatureFileError):
    """Header dimensions overflow sane limits."""


@dataclass(frozen=True)
class Image:
    """8-bit image; ``pixels`` has shape (height, width, channels), uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) uint8 pixels, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def to_grayscale(self) -> "Image":
        """Single-channel copy using ITU-R BT.601 luma weights."""
        if self.channels == 1:
            return self
        rgb = self.pixels.astype(np.float64)
        luma = rgb[:, :, 0] * 0.299 + rgb[:, :, 1] * 0.587 + rgb[:, :, 2] * 0.114
        return Image(np.clip(np.rint(luma), 0, 255).astype(np.uint8))


def load_image(path) -> Image:
    """Decode a PNG, PGM, or PPM file into an Image."""
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        mode = im.mode
        if mode not in ("L", "RGB"):
            im = im.convert("RGB" if mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(im, dtype=np.uint8)
    return Image(arr)


@dataclass(frozen=True)
class FeatureMap:
    """Grid of per-cell feature vectors tied back to source-image pixels.

    ``data`` has shape (height, width, dim). ``stride_px`` maps grid steps to
    pixel steps; grid cell (i, j) anchors at pixel (j*stride_px, i*stride_px)
    and the whole grid must stay inside the source image.
    """

    data: np.ndarray
    stride_px: int
    source_size_px: tuple[int, int]  # (width, height)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.size == 0:
            raise ValueError(f"feature data must be non-empty (H, W, L), got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("feature data contains NaN or Inf")
        if self.stride_px < 1:
            raise ValueError(f"stride_px must be >= 1, got {self.stride_px}")
        src_w, src_h = self.source_size_px
        if data.shape[0] * self.stride_px > src_h or data.shape[1] * self.stride_px > src_w:
            raise ValueError(
                f"grid {data.shape[:2]} at stride {self.stride_px} exceeds "
                f"source size {self.source_size_px}"
            )
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


def extract_raw_patches(
    img: Image, patch_size: int, stride: int, normalize: bool = True
) -> FeatureMap:
    """Flatten every patch_size x patch_size window into a feature vector.

    With ``normalize`` each patch is mean-subtracted and scaled to unit
    variance (so cosine similarity on these features behaves like classic
    zero-mean normalized correlation on pixels); constant patches become
    zero vectors. Feature length is patch_size**2 * channels.

    ``stride`` may not exceed ``patch_size``: cells must tile within the
    image so grid geometry maps back to pixels.
    """
    if patch_size < 1 or stride < 1:
        raise ValueError("patch_size and stride must be >= 1")
    if patch_size > min(img.width, img.height):
        raise ValueError(
            f"patch {patch_size} exceeds image {img.width}x{img.height}"
        )
    px = img.pixels.astype(np.float64)
    windows = np.lib.stride_tricks.sliding_window_view(px, (patch_size, patch_size), axis=(0, 1))
    windows = windows[::stride, ::stride]  # (H, W, C, p, p)
    grid_h, grid_w = windows.shape[:2]
    # flatten each patch in pixel-row, pixel-col, channel order
    feats = np.moveaxis(windows, 2, 4).reshape(grid_h, grid_w, -1)
    if normalize:
        mean = feats.mean(axis=2, keepdims=True)
        std = feats.std(axis=2, keepdims=True)
        feats = np.where(std > 0.0, (feats - mean) / np.where(std > 0.0, std, 1.0), 0.0)
    return FeatureMap(feats, stride_px=stride, source_size_px=(img.width, img.height))


def save_feature_file(fmap: FeatureMap, path) -> None:
    """Write a FeatureMap as FTM1 (float32 payload)."""
    src_w, src_h = fmap.source_size_px
    header = _HEADER.pack(
        _MAGIC, _VERSION, fmap.height, fmap.width, fmap.dim, fmap.stride_px, src_w, src_h
    )
    payload = np.ascontiguousarray(fmap.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_feature_file(path) -> FeatureMap:
    """Read an FTM1 file back into a FeatureMap.

    Raises BadMagicError, TruncatedPayloadError, or DimensionOverflowError
    for the respective defects; other malformed headers raise
    FeatureFileError.
    """
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise BadMagicError(f"{path}: not an FTM1 file")
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header cut short at {len(blob)} bytes")
    _, version, h, w, dim, stride, src_w, src_h = _HEADER.unpack_from(blob)
    if version != _VERSION:
        raise FeatureFileError(f"{path}: unsupported FTM1 version {version}")
    if min(h, w, dim, stride) < 1:
        raise FeatureFileError(f"{path}: zero dimension in header ({h}x{w}x{dim}, stride {stride})")
    n_elements = h * w * dim
    if n_elements > _MAX_ELEMENTS:
        raise DimensionOverflowError(
            f"{path}: header claims {h}x{w}x{dim} = {n_elements} elements"
        )
    expected = _HEADER.size + 4 * n_elements
    if len(blob) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(blob) - _HEADER.size} bytes, header promises {4 * n_elements}"
        )
    if len(blob) > expected:
        raise FeatureFileError(f"{path}: {len(blob) - expected} trailing bytes after payload")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(h, w, dim)
    try:
        return FeatureMap(data, stride_px=stride, source_size_px=(src_w, src_h))
    except ValueError as exc:
        raise FeatureFileError(f"{path}: {exc}") from exc


def write_pgm(values: np.ndarray, path) -> dict:
    """Save a 2-D map as binary 8-bit PGM, scaled to span [min, max].

    Returns the scale metadata ``{"min": ..., "max": ...}`` so callers can
    park it in a sidecar file; a constant map writes as all zeros.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {values.shape}")
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        scaled = np.rint((values - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(values)
    body = scaled.astype(np.uint8).tobytes()
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + body)
    return {"min": lo, "max": hi}
