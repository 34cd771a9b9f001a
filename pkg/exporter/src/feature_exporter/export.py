"""Image file -> FTM1 feature file."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .ftm import write_ftm
from .vgg import DEFAULT_LAYERS, Backbone, extract_grid, load_backbone

__all__ = ["ExportConfig", "export_features"]


@dataclass(frozen=True)
class ExportConfig:
    image: str
    out: str
    layers: str = DEFAULT_LAYERS
    weights: str = "pretrained"
    seed: int = 0
    resize: tuple[int, int] | None = None  # (width, height) before extraction


def _load_rgb(path, resize) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if resize is not None:
            im = im.resize(resize, Image.BILINEAR)
        return np.asarray(im, dtype=np.uint8)


def export_features(cfg: ExportConfig, backbone: Backbone | None = None) -> dict:
    """Run the backbone over one image and write the grid as FTM1.

    Returns a small summary dict (grid shape, stride, source size). A
    preloaded backbone can be passed to amortize model construction over
    many images.
    """
    if backbone is None:
        backbone = load_backbone(cfg.layers, cfg.weights, cfg.seed)
    rgb = _load_rgb(cfg.image, cfg.resize)
    grid = extract_grid(backbone, rgb)
    src_h, src_w = rgb.shape[:2]
    write_ftm(cfg.out, grid, stride_px=backbone.stride_px, source_size_px=(src_w, src_h))
    return {
        "out": cfg.out,
        "height": grid.shape[0],
        "width": grid.shape[1],
        "dim": grid.shape[2],
        "stride_px": backbone.stride_px,
        "source_size_px": [src_w, src_h],
    }
