"""Synthetic corpus generator with planted sub-image ground truth.

Builds a directory of block-mosaic background images, crops a set of
query patches, and pastes each query into a known subset of backgrounds
so that containment is true by construction.  The answer sets (which
images contain which query) are written alongside the images, making
the corpus suitable for end-to-end retrieval and feedback evaluation
without any manual labeling.

Design notes:

* Queries are two-pool mosaics: the left half of the crop draws from
  one subset of the palette, the right half from a disjoint subset.
  A query's global color mixture therefore differs from the mixture
  of either half, which makes first-pass retrieval genuinely hard for
  pastes at arbitrary offsets and leaves measurable headroom for the
  feedback loop to close.
* The first host of every query receives the crop at a canonical
  anchor position chosen so that one aligned grid cell straddles the
  crop's color seam symmetrically.  That cell's window reproduces the
  whole-crop mixture, so the original host is findable from the very
  first ranking, which is what the iterations-to-original metric
  tracks.
* Remaining hosts get the crop at uniformly random offsets.
* Each host's background is brightness-jittered before pasting, so
  answer images are not trivially separable while the planted crop
  pixels stay exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

# Fixed palette of well-separated RGB colors. Kept small on purpose:
# a tight palette raises the collision rate between queries and
# distractor backgrounds, which is the regime where relevance feedback
# actually has work to do.
PALETTE = np.array(
    [
        (202, 54, 46),
        (52, 120, 196),
        (58, 164, 74),
        (240, 196, 44),
        (148, 72, 188),
        (236, 126, 38),
        (86, 196, 188),
        (138, 92, 50),
    ],
    dtype=np.uint8,
)

_BG_BLOCKS = 8
_CROP_BLOCKS = 6


@dataclass
class SynthResult:
    """Paths and ground truth produced by one generator run."""

    answers: dict[str, list[int]]
    image_paths: list[Path]
    query_paths: list[Path]
    # image filename -> (query filename, top, left) for every paste,
    # so tests can verify exact pixel containment.
    placements: dict[str, tuple[str, int, int]] = field(default_factory=dict)


def _paint_blocks(canvas: np.ndarray, grid: np.ndarray, palette: np.ndarray) -> None:
    """Fill ``canvas`` with solid rectangles of palette colors.

    ``grid`` holds one palette index per block; block edges follow the
    same floor arithmetic as the retrieval grid so sizes stay exact for
    any canvas size.
    """
    rows, cols = grid.shape
    h, w = canvas.shape[:2]
    for r in range(rows):
        for c in range(cols):
            canvas[
                r * h // rows : (r + 1) * h // rows,
                c * w // cols : (c + 1) * w // cols,
            ] = palette[grid[r, c]]


def _background(rng: np.random.Generator, size: int, palette: np.ndarray) -> np.ndarray:
    n_colors = int(rng.integers(3, 7))
    subset = rng.choice(len(palette), size=n_colors, replace=False)
    grid = subset[rng.integers(0, n_colors, (_BG_BLOCKS, _BG_BLOCKS))]
    img = np.empty((size, size, 3), dtype=np.uint8)
    _paint_blocks(img, grid, palette)
    return img


def _query_crop(rng: np.random.Generator, side: int, palette: np.ndarray) -> np.ndarray:
    """Two-pool mosaic crop: left and right halves use disjoint colors."""
    n_colors = int(rng.integers(3, 5))
    subset = rng.choice(len(palette), size=n_colors, replace=False)
    half = max(1, n_colors // 2)
    crop = np.empty((side, side, 3), dtype=np.uint8)
    for r in range(_CROP_BLOCKS):
        for c in range(_CROP_BLOCKS):
            pool = subset[:half] if c < _CROP_BLOCKS // 2 else subset[half:]
            color = palette[pool[int(rng.integers(0, len(pool)))]]
            crop[
                r * side // _CROP_BLOCKS : (r + 1) * side // _CROP_BLOCKS,
                c * side // _CROP_BLOCKS : (c + 1) * side // _CROP_BLOCKS,
            ] = color
    return crop


def generate_corpus(
    out_dir: str | Path,
    n_backgrounds: int = 500,
    n_queries: int = 20,
    seed: int = 0,
    image_size: int = 128,
    crop_area_frac: float = 0.18,
    brightness_jitter: float = 0.25,
) -> SynthResult:
    """Generate a seeded corpus with planted query crops.

    Writes ``images/img_NNNNN.png``, ``queries/query_NN.png``, and
    ``answers.json`` (query filename -> list of containing image ids,
    first id is the host that received the crop at the canonical
    anchor).  Answer-set sizes are drawn around a mean of 11 and capped
    at 20; hosts are disjoint across queries.

    Returns a :class:`SynthResult` with the ground truth in memory.
    """
    if image_size < 16:
        raise ValueError("image_size must be at least 16")
    if not 0.0 < crop_area_frac < 1.0:
        raise ValueError("crop_area_frac must be in (0, 1)")
    crop_side = int(round(crop_area_frac**0.5 * image_size))
    if crop_side < _CROP_BLOCKS:
        raise ValueError("crop too small for its block mosaic")

    out = Path(out_dir)
    images_dir = out / "images"
    queries_dir = out / "queries"
    images_dir.mkdir(parents=True, exist_ok=True)
    queries_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    backgrounds = [_background(rng, image_size, PALETTE) for _ in range(n_backgrounds)]
    host_pool = [int(i) for i in rng.permutation(n_backgrounds)]

    # Anchor the first host's paste so the grid cell at (2, 2) sits
    # symmetrically across the crop's left/right color seam.
    anchor = 5 * image_size // 8 - crop_side // 2
    anchor = min(max(anchor, 0), image_size - crop_side)

    answers: dict[str, list[int]] = {}
    placements: dict[str, tuple[str, int, int]] = {}
    query_paths: list[Path] = []

    for q in range(n_queries):
        crop = _query_crop(rng, crop_side, PALETTE)
        n_hosts = int(np.clip(int(round(rng.normal(11.0, 3.0))), 3, 20))
        if n_hosts > len(host_pool):
            raise ValueError(
                "not enough backgrounds for the requested queries: "
                f"need {n_hosts} more hosts, {len(host_pool)} left"
            )
        hosts = [host_pool.pop() for _ in range(n_hosts)]
        query_name = f"query_{q:02d}.png"
        answers[query_name] = hosts
        for position, host in enumerate(hosts):
            factor = rng.uniform(1.0 - brightness_jitter, 1.0 + brightness_jitter)
            jittered = backgrounds[host].astype(np.float64) * factor
            backgrounds[host] = np.clip(jittered, 0, 255).astype(np.uint8)
            if position == 0:
                top = left = anchor
            else:
                top, left = (
                    int(v)
                    for v in rng.integers(0, image_size - crop_side + 1, size=2)
                )
            backgrounds[host][top : top + crop_side, left : left + crop_side] = crop
            placements[f"img_{host:05d}.png"] = (query_name, top, left)
        query_path = queries_dir / query_name
        Image.fromarray(crop).save(query_path)
        query_paths.append(query_path)

    image_paths: list[Path] = []
    for i, bg in enumerate(backgrounds):
        path = images_dir / f"img_{i:05d}.png"
        Image.fromarray(bg).save(path)
        image_paths.append(path)

    with open(out / "answers.json", "w", encoding="utf-8") as fh:
        json.dump(answers, fh, indent=2, sort_keys=True)

    return SynthResult(
        answers=answers,
        image_paths=image_paths,
        query_paths=query_paths,
        placements=placements,
    )
