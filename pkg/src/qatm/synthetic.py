"""Synthetic planted-template instances for self-contained evaluation.

Each instance is a grayscale noise image with two disjoint regions:

* a *target* region whose pixels the positive template is cropped from, and
* a *repeated block*: one small tile stamped out periodically, standing in
  for textureless or patterned regions of real images.

The paired negative template is the same tile repeated to template size, so
every one of its cells is identical. A quality-blind scorer matches that
negative onto the repeated block as confidently as the positive onto the
target; a distinctiveness-aware scorer collapses the homogeneous match to
~1/(cells * repeats). Boxes are aligned to the patch grid so grid-space
windows map exactly onto pixel boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import Image

__all__ = ["PlantedInstance", "make_planted_instance"]


@dataclass(frozen=True)
class PlantedInstance:
    search: Image
    template: Image  # crop of the target region, optionally noised
    negative_template: Image  # one tile repeated to template size
    true_box_px: tuple[int, int, int, int]
    block_box_px: tuple[int, int, int, int]


def make_planted_instance(
    seed: int,
    image_px: int = 96,
    template_px: int = 24,
    patch_px: int = 6,
    template_noise: float = 4.0,
) -> PlantedInstance:
    """Build one instance; geometry snaps to multiples of ``patch_px``."""
    if template_px % patch_px or image_px % patch_px:
        raise ValueError("template_px and image_px must be multiples of patch_px")
    if 2 * template_px > image_px:
        raise ValueError("image too small for two disjoint template-sized regions")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))

    search = rng.integers(0, 256, size=(image_px, image_px), dtype=np.uint8)

    cells = image_px // patch_px
    t_cells = template_px // patch_px
    placements = cells - t_cells + 1

    def draw_box():
        gx, gy = rng.integers(placements, size=2)
        return int(gx) * patch_px, int(gy) * patch_px

    bx, by = draw_box()
    while True:
        cx, cy = draw_box()
        if abs(cx - bx) >= template_px or abs(cy - by) >= template_px:
            break

    tile = rng.integers(0, 256, size=(patch_px, patch_px), dtype=np.uint8)
    block = np.tile(tile, (t_cells, t_cells))
    search[cy : cy + template_px, cx : cx + template_px] = block

    crop = search[by : by + template_px, bx : bx + template_px].astype(np.float64)
    if template_noise > 0:
        crop = crop + rng.normal(0.0, template_noise, crop.shape)
    template = np.clip(np.rint(crop), 0, 255).astype(np.uint8)

    return PlantedInstance(
        search=Image(search),
        template=Image(template),
        negative_template=Image(block),
        true_box_px=(bx, by, template_px, template_px),
        block_box_px=(cx, cy, template_px, template_px),
    )
