"""VGG19 activation grids for matching.

The matcher wants one dense H x W x L grid per image. A VGG19 backbone
offers activations at strides 1, 2, 4, 8, 16; any plus-joined combination
of layer names ("relu1_2+relu3_4") is accepted, finer grids are bilinearly
resized onto the coarsest one, and channels are concatenated. The default
pairs an early texture layer with a mid-level one for 64 + 256 = 320
channels at stride 4, a good trade between localization and abstraction;
the precise 320-d recipe used elsewhere is not published, so this one is
simply this tool's documented choice.

Weights come from the torchvision ImageNet checkpoint by default. When the
checkpoint cannot be downloaded (offline hosts) a seeded random
initialization is available; random convolutional features still separate
matched from unmatched patches well enough to exercise the engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch.nn import functional as F
from torchvision import models

DEFAULT_LAYERS = "relu1_2+relu3_4"

# torchvision vgg19().features index and stride for each named activation
_LAYER_TABLE: dict[str, tuple[int, int]] = {}


def _build_layer_table() -> None:
    plan = ((1, 2), (2, 2), (3, 4), (4, 4), (5, 4))  # (block, convs per block)
    index, stride = 0, 1
    for block, n_convs in plan:
        for conv in range(1, n_convs + 1):
            _LAYER_TABLE[f"conv{block}_{conv}"] = (index, stride)
            _LAYER_TABLE[f"relu{block}_{conv}"] = (index + 1, stride)
            index += 2
        index += 1  # the block's max-pool
        stride *= 2


_build_layer_table()


class WeightsUnavailableError(RuntimeError):
    """Pretrained checkpoint could not be obtained (download failure)."""


def parse_layers(spec: str) -> list[str]:
    names = [part.strip() for part in spec.split("+") if part.strip()]
    if not names:
        raise ValueError("empty layer spec")
    unknown = [n for n in names if n not in _LAYER_TABLE]
    if unknown:
        raise ValueError(
            f"unknown layer name(s) {unknown}; valid names: {', '.join(sorted(_LAYER_TABLE))}"
        )
    return names


@dataclass(frozen=True)
class Backbone:
    features: torch.nn.Module
    layers: list[str]
    stride_px: int  # stride of the coarsest requested layer


def load_backbone(
    layers: str = DEFAULT_LAYERS, weights: str = "pretrained", seed: int = 0
) -> Backbone:
    """Build the truncated VGG19 feature stack for the requested layers."""
    names = parse_layers(layers)
    if weights == "pretrained":
        try:
            net = models.vgg19(weights=models.VGG19_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise WeightsUnavailableError(
                f"could not obtain pretrained VGG19 weights: {exc}"
            ) from exc
    elif weights == "random":
        torch.manual_seed(seed)
        net = models.vgg19(weights=None)
    else:
        raise ValueError(f"weights must be 'pretrained' or 'random', got {weights!r}")

    last = max(_LAYER_TABLE[n][0] for n in names)
    trunk = net.features[: last + 1].eval()
    for p in trunk.parameters():
        p.requires_grad_(False)
    return Backbone(
        features=trunk,
        layers=names,
        stride_px=max(_LAYER_TABLE[n][1] for n in names),
    )


_IMAGENET_MEAN = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
_IMAGENET_STD = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)


def extract_grid(backbone: Backbone, rgb: np.ndarray) -> np.ndarray:
    """Activation grid for an (H, W, 3) uint8 image, shape (h, w, L) float32.

    Finer layers are bilinearly resized to the coarsest layer's grid before
    channel concatenation.
    """
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB pixels, got shape {rgb.shape}")
    x = torch.from_numpy(np.array(rgb, dtype=np.uint8)).float().permute(2, 0, 1)[None] / 255.0
    x = (x - _IMAGENET_MEAN) / _IMAGENET_STD

    wanted = {_LAYER_TABLE[n][0]: n for n in backbone.layers}
    grabbed: dict[str, torch.Tensor] = {}
    with torch.no_grad():
        for idx, module in enumerate(backbone.features):
            x = module(x)
            if idx in wanted:
                grabbed[wanted[idx]] = x
    coarsest = min(grabbed.values(), key=lambda t: t.shape[2] * t.shape[3])
    target = coarsest.shape[2:]
    parts = []
    for name in backbone.layers:  # keep the requested layer order
        act = grabbed[name]
        if act.shape[2:] != target:
            act = F.interpolate(act, size=target, mode="bilinear", align_corners=False)
        parts.append(act)
    stacked = torch.cat(parts, dim=1)[0]  # (L, h, w)
    return stacked.permute(1, 2, 0).numpy().astype(np.float32)
