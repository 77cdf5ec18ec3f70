"""Patch cropping with the exact rules of the analysis engine.

Coordinates round half-up, the box origin is round(coord) minus
floor(patch_size / 2), and the box clamps (shifts) inside the image at
borders. Any drift from these rules would silently desynchronize the
exported features from the engine's own patch extraction, so the shared
fixture in tests/fixtures/patch_origins.json pins them on both sides.
"""

from __future__ import annotations

import math

import numpy as np


class CropError(Exception):
    pass


def patch_origin(x: float, y: float, width: int, height: int, patch_size: int) -> tuple[int, int]:
    if patch_size > width or patch_size > height:
        raise CropError(f"patch_size {patch_size} exceeds {width}x{height} image")
    if not (0 <= x < width and 0 <= y < height):
        raise CropError(f"fixation ({x}, {y}) outside {width}x{height} image")
    half = patch_size // 2
    ox = min(max(math.floor(x + 0.5) - half, 0), width - patch_size)
    oy = min(max(math.floor(y + 0.5) - half, 0), height - patch_size)
    return ox, oy


def crop_patch(image: np.ndarray, x: float, y: float, patch_size: int) -> np.ndarray:
    height, width = image.shape
    ox, oy = patch_origin(x, y, width, height, patch_size)
    return np.ascontiguousarray(image[oy : oy + patch_size, ox : ox + patch_size])
