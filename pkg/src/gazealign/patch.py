"""Square image patches centered on fixations, shifted at stimulus borders.

Conventions, fixed for determinism:
  * sub-pixel fixation coordinates are rounded half-up to the nearest pixel;
  * the box origin is round(coord) - floor(size / 2), so a 100-px patch
    spans 50 pixels left/above and 49 right/below the fixation pixel;
  * at borders the box is clamped (shifted) inside the image, never padded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadPatchSize, OutOfBounds
from .model import Fixation, Scanpath, StimulusImage, write_pgm


@dataclass(frozen=True)
class PatchConfig:
    patch_size: int = 100

    def __post_init__(self):
        if self.patch_size <= 0:
            raise BadPatchSize("patch_size must be positive")


@dataclass(frozen=True)
class Patch:
    """Pixel crop plus its placement in stimulus coordinates."""

    pixels: np.ndarray
    origin_x: int
    origin_y: int
    fixation_index: int

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def extract_patch(img: StimulusImage, f: Fixation, cfg: PatchConfig) -> Patch:
    """Crop one patch centered on the fixation, clamped to the image."""
    size = cfg.patch_size
    if size > img.width or size > img.height:
        raise BadPatchSize(
            f"patch_size {size} exceeds stimulus {img.width}x{img.height}"
        )
    if not (0 <= f.x < img.width and 0 <= f.y < img.height):
        raise OutOfBounds(
            f"fixation {f.index} at ({f.x}, {f.y}) outside "
            f"{img.width}x{img.height} stimulus"
        )
    half = size // 2
    ox = min(max(_round_half_up(f.x) - half, 0), img.width - size)
    oy = min(max(_round_half_up(f.y) - half, 0), img.height - size)
    pixels = np.ascontiguousarray(img.pixels[oy : oy + size, ox : ox + size])
    return Patch(pixels=pixels, origin_x=ox, origin_y=oy, fixation_index=f.index)


def extract_scanpath_patches(
    img: StimulusImage, sp: Scanpath, cfg: PatchConfig
) -> list[Patch]:
    """One patch per fixation, in fixation order."""
    patches = []
    for f in sp.fixations:
        try:
            patches.append(extract_patch(img, f, cfg))
        except OutOfBounds as exc:
            raise OutOfBounds(f"{sp.key}: {exc}") from None
    return patches


def write_patch_pgm(out_dir: str | Path, sp: Scanpath, patch: Patch) -> Path:
    """Debug export: one patch as <subject>_<stimulus>_<index>.pgm."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{sp.subject_id}_{sp.stimulus_id}_{patch.fixation_index}.pgm"
    write_pgm(path, patch.pixels)
    return path
