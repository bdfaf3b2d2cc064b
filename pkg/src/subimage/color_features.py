"""Color quantization and border/interior pixel statistics.

An image region is summarized by a pair of color histograms over a small
quantized palette: one counting pixels whose 4-connected neighborhood is
uniform in quantized color (interior pixels), one counting everything else
(border pixels). The two histograms are normalized jointly and then log
discretized so that every bin fits in 4 bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance import F_TABLE

__all__ = [
    "PALETTE_LEVELS",
    "PixelClassMap",
    "quantize_color",
    "quantize_image",
    "classify_pixels",
    "class_map_from_rgb",
    "extract_histogram",
]

# Channel resolution (r, g, b) per palette size. The 16-color palette keeps
# extra resolution on green, where the eye discriminates best.
PALETTE_LEVELS: dict[int, tuple[int, int, int]] = {
    16: (2, 4, 2),
    64: (4, 4, 4),
}

# (top, left, bottom, right) in pixel coordinates, half-open on bottom/right.
Region = tuple[int, int, int, int]


def _levels(palette_size: int) -> tuple[int, int, int]:
    try:
        return PALETTE_LEVELS[palette_size]
    except KeyError:
        raise ValueError(
            f"unsupported palette size {palette_size}; expected one of {sorted(PALETTE_LEVELS)}"
        ) from None


def quantize_color(r: int, g: int, b: int, palette_size: int = 64) -> int:
    """Map one 8-bit RGB triple to its palette index.

    Each channel is split into equal-width bins; the index interleaves the
    bins as r * (gLevels * bLevels) + g * bLevels + b.
    """
    rl, gl, bl = _levels(palette_size)
    for name, value in (("r", r), ("g", g), ("b", b)):
        if not 0 <= int(value) <= 255:
            raise ValueError(f"channel {name} out of range [0, 255]: {value}")
    rbin = int(r) * rl // 256
    gbin = int(g) * gl // 256
    bbin = int(b) * bl // 256
    return rbin * (gl * bl) + gbin * bl + bbin


def quantize_image(rgb: np.ndarray, palette_size: int = 64) -> np.ndarray:
    """Quantize an (H, W, 3) uint8 image to an (H, W) grid of palette indices."""
    rl, gl, bl = _levels(palette_size)
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {rgb.shape}")
    channels = rgb.astype(np.uint16)
    rbin = channels[..., 0] * rl >> 8
    gbin = channels[..., 1] * gl >> 8
    bbin = channels[..., 2] * bl >> 8
    return (rbin * (gl * bl) + gbin * bl + bbin).astype(np.uint8)


@dataclass(frozen=True)
class PixelClassMap:
    """Per-pixel quantized colors plus the border/interior split.

    ``interior`` is True where all four 4-connected neighbors exist and share
    the pixel's quantized color; pixels on the image boundary are border by
    definition.
    """

    colors: np.ndarray  # (H, W) palette indices
    interior: np.ndarray  # (H, W) bool, False = border
    palette_size: int

    @property
    def height(self) -> int:
        return self.colors.shape[0]

    @property
    def width(self) -> int:
        return self.colors.shape[1]


def classify_pixels(colors: np.ndarray, palette_size: int = 64) -> PixelClassMap:
    """Split a quantized pixel grid into border and interior pixels."""
    _levels(palette_size)
    colors = np.asarray(colors)
    if colors.ndim != 2 or colors.size == 0:
        raise ValueError(f"expected a non-empty (H, W) grid, got shape {colors.shape}")
    if int(colors.max()) >= palette_size or int(colors.min()) < 0:
        raise ValueError("color index out of range for palette")
    interior = np.zeros(colors.shape, dtype=bool)
    if colors.shape[0] > 2 and colors.shape[1] > 2:
        core = colors[1:-1, 1:-1]
        interior[1:-1, 1:-1] = (
            (core == colors[:-2, 1:-1])
            & (core == colors[2:, 1:-1])
            & (core == colors[1:-1, :-2])
            & (core == colors[1:-1, 2:])
        )
    return PixelClassMap(colors=colors, interior=interior, palette_size=palette_size)


def class_map_from_rgb(rgb: np.ndarray, palette_size: int = 64) -> PixelClassMap:
    """Quantize and classify an (H, W, 3) uint8 image in one step."""
    return classify_pixels(quantize_image(rgb, palette_size), palette_size)


def extract_histogram(class_map: PixelClassMap, region: Region) -> np.ndarray:
    """Discretized border+interior histogram of a rectangular region.

    Returns a flat uint8 array of 2 * paletteSize bins: border counts first,
    then interior counts. Raw counts are normalized jointly by the region's
    pixel count onto the [0, 255] integer scale (round half up) and then log
    discretized into [0, 9].
    """
    top, left, bottom, right = (int(v) for v in region)
    if not (0 <= top < bottom <= class_map.height and 0 <= left < right <= class_map.width):
        raise ValueError(
            f"region {region} invalid for {class_map.height}x{class_map.width} image"
        )
    colors = class_map.colors[top:bottom, left:right].ravel()
    interior = class_map.interior[top:bottom, left:right].ravel()
    m = class_map.palette_size
    border_counts = np.bincount(colors[~interior], minlength=m)
    interior_counts = np.bincount(colors[interior], minlength=m)
    counts = np.concatenate([border_counts, interior_counts]).astype(np.int64)
    total = colors.size
    # round-half-up of counts * 255 / total, kept in exact integer arithmetic
    scaled = (2 * counts * 255 + total) // (2 * total)
    return F_TABLE[scaled]
