"""Fixed three-level tile hierarchy and image/query signatures.

Every image gets the same static partition: one root tile covering the whole
image, nine half-size tiles arranged 3x3 that overlap their neighbors by half
a side, and sixteen quarter-size leaf tiles forming a disjoint 4x4 grid. Only
leaf histograms are ever stored; every coarser tile is a view over the 2x2 or
4x4 block of leaves it covers, so one image costs 16 histograms.

Tile ids: 0 is the root, 1..9 are the half-size tiles in row-major order,
10..25 are the leaves in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .color_features import PixelClassMap, Region, extract_histogram

__all__ = [
    "GRID",
    "LEAF_COUNT",
    "TILE_COUNT",
    "ROOT_TILE_ID",
    "LEVEL1_TILE_IDS",
    "LEAF_TILE_IDS",
    "TileInfo",
    "TOPOLOGY",
    "tile_info",
    "tile_level",
    "leaves_of",
    "leaf_index",
    "tile_leaf_indices",
    "pixel_rect",
    "ImageSignature",
    "QuerySignature",
    "build_image_signature",
    "build_query_signature",
]

GRID = 4  # leaves per image side
LEAF_COUNT = GRID * GRID
TILE_COUNT = 26
ROOT_TILE_ID = 0
LEVEL1_TILE_IDS = tuple(range(1, 10))
LEAF_TILE_IDS = tuple(range(10, 26))


def leaf_index(row: int, col: int) -> int:
    """Row-major position of leaf cell (row, col) in the 16-leaf stack."""
    if not (0 <= row < GRID and 0 <= col < GRID):
        raise ValueError(f"leaf cell out of range: {(row, col)}")
    return row * GRID + col


@dataclass(frozen=True)
class TileInfo:
    tile_id: int
    level: int
    cells: tuple[tuple[int, int], ...]  # covered leaf cells, row-major
    grid_rect: tuple[int, int, int, int]  # (r0, c0, r1, c1) in quarter units


def _build_topology() -> tuple[TileInfo, ...]:
    tiles = [
        TileInfo(
            tile_id=ROOT_TILE_ID,
            level=0,
            cells=tuple(product(range(GRID), range(GRID))),
            grid_rect=(0, 0, GRID, GRID),
        )
    ]
    for i, j in product(range(3), range(3)):
        cells = ((i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1))
        tiles.append(
            TileInfo(
                tile_id=1 + i * 3 + j,
                level=1,
                cells=cells,
                grid_rect=(i, j, i + 2, j + 2),
            )
        )
    for r, c in product(range(GRID), range(GRID)):
        tiles.append(
            TileInfo(
                tile_id=10 + r * GRID + c,
                level=2,
                cells=((r, c),),
                grid_rect=(r, c, r + 1, c + 1),
            )
        )
    return tuple(tiles)


TOPOLOGY: tuple[TileInfo, ...] = _build_topology()

# Leaf stack positions covered by each tile, row-major within the tile block.
LEAF_INDICES_BY_TILE: tuple[tuple[int, ...], ...] = tuple(
    tuple(leaf_index(r, c) for r, c in info.cells) for info in TOPOLOGY
)


def tile_info(tile_id: int) -> TileInfo:
    if not 0 <= tile_id < TILE_COUNT:
        raise ValueError(f"tile id out of range [0, {TILE_COUNT - 1}]: {tile_id}")
    return TOPOLOGY[tile_id]


def tile_level(tile_id: int) -> int:
    return tile_info(tile_id).level


def leaves_of(tile_id: int) -> tuple[tuple[int, int], ...]:
    """Leaf grid cells covered by a tile, row-major."""
    return tile_info(tile_id).cells


def tile_leaf_indices(tile_id: int) -> tuple[int, ...]:
    return LEAF_INDICES_BY_TILE[tile_info(tile_id).tile_id]


def pixel_rect(tile_id: int, width: int, height: int) -> Region:
    """Pixel rectangle of a tile for a concrete image size (half-open)."""
    r0, c0, r1, c1 = tile_info(tile_id).grid_rect
    return (r0 * height // GRID, c0 * width // GRID, r1 * height // GRID, c1 * width // GRID)


@dataclass
class ImageSignature:
    """One database image: its id and the 16 leaf histograms, row-major."""

    image_id: int
    leaves: np.ndarray  # (16, 2 * paletteSize) uint8, border bins then interior

    @property
    def palette_size(self) -> int:
        return self.leaves.shape[1] // 2

    def tile_leaves(self, tile_id: int) -> np.ndarray:
        """Leaf histograms of one tile, stacked in row-major block order."""
        return self.leaves[list(tile_leaf_indices(tile_id))]


@dataclass
class QuerySignature:
    """Query histograms at the three partition granularities.

    Each layer is recomputed from the query pixels, not merged from finer
    layers. g4 uses the same 4x4 grid as image leaves, so a query that is a
    full image has g4 equal to that image's stored leaves.
    """

    g1: np.ndarray  # (1, bins) whole-query histogram
    g2: np.ndarray  # (4, bins) 2x2 quadrants, row-major
    g4: np.ndarray  # (16, bins) 4x4 cells, row-major

    @property
    def palette_size(self) -> int:
        return self.g1.shape[1] // 2

    def features_for_level(self, level: int) -> np.ndarray:
        """Query histograms used against a database tile of the given level.

        The query shrinks to the tile being compared: the root's 16 leaves
        pair with g4, a half-size tile's 4 leaves with g2, a leaf with g1.
        """
        if level == 0:
            return self.g4
        if level == 1:
            return self.g2
        if level == 2:
            return self.g1
        raise ValueError(f"level out of range [0, 2]: {level}")


def _grid_histograms(class_map: PixelClassMap, n: int) -> np.ndarray:
    """Histograms of an n x n partition of the image, row-major."""
    h, w = class_map.height, class_map.width
    rows = []
    for r in range(n):
        for c in range(n):
            region = (r * h // n, c * w // n, (r + 1) * h // n, (c + 1) * w // n)
            rows.append(extract_histogram(class_map, region))
    return np.stack(rows)


def _require_min_size(class_map: PixelClassMap) -> None:
    if class_map.height < GRID or class_map.width < GRID:
        raise ValueError(
            f"image too small for a {GRID}x{GRID} leaf grid: "
            f"{class_map.height}x{class_map.width}"
        )


def build_image_signature(class_map: PixelClassMap, image_id: int = 0) -> ImageSignature:
    """Extract the 16 leaf histograms of one database image."""
    _require_min_size(class_map)
    return ImageSignature(image_id=image_id, leaves=_grid_histograms(class_map, GRID))


def build_query_signature(class_map: PixelClassMap) -> QuerySignature:
    """Extract the whole/quadrant/cell histogram layers of a query image."""
    _require_min_size(class_map)
    return QuerySignature(
        g1=_grid_histograms(class_map, 1),
        g2=_grid_histograms(class_map, 2),
        g4=_grid_histograms(class_map, GRID),
    )
