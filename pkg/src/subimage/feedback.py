"""Relevance-feedback engine: tile penalties, query refinement, ranking.

Every database image carries a table of 26 tile penalties that starts uniform
at 1/26. When the user marks results, each positive image's table is
re-estimated from the feedback: a tile's consistency with an image set is the
sum over the set of exp(minimum tile distance), and the new penalty is that
consistency against the positives, damped by how consistent the tile also is
with the negatives, normalized so the 26 penalties sum to one. Tiles that
look like the positives and unlike the negatives end up cheap.

The query is then refined toward the minimum-penalty tile of every positive
image at each granularity, and images are re-ranked by the penalty-weighted
minimum tile distance to the refined query. Images never marked positive keep
the uniform table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .tiling import (
    LEAF_COUNT,
    LEAF_INDICES_BY_TILE,
    TILE_COUNT,
    ImageSignature,
    QuerySignature,
    tile_info,
)

__all__ = [
    "PenaltyTable",
    "FeedbackSet",
    "RankedImage",
    "Ranking",
    "IterationRecord",
    "SessionState",
    "Corpus",
    "uniform_penalties",
    "pairwise_leaf_distances",
    "dts",
    "update_penalties",
    "weighted_feature_mean",
    "refine_query",
    "rank_images",
    "start_session",
    "run_iteration",
]

_LEAF_DIAG = np.arange(LEAF_COUNT)
# (9, 4) leaf stack positions of the half-size tiles, row-major block order
_BLOCKS = np.array([LEAF_INDICES_BY_TILE[t] for t in range(1, 10)])
_BLOCK_POS = np.arange(4)


def uniform_penalties() -> np.ndarray:
    """Fresh penalty vector before any feedback: all 26 tiles at 1/26."""
    return np.full(TILE_COUNT, 1.0 / TILE_COUNT)


@dataclass
class PenaltyTable:
    """Per-image tile penalties after the given feedback iteration."""

    image_id: int
    penalties: np.ndarray  # (26,) float64, sums to 1
    iteration: int = 0


@dataclass(frozen=True)
class FeedbackSet:
    """One round of user feedback: disjoint positive and negative image ids."""

    positives: tuple[int, ...] = ()
    negatives: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "positives", tuple(int(i) for i in self.positives))
        object.__setattr__(self, "negatives", tuple(int(i) for i in self.negatives))
        overlap = set(self.positives) & set(self.negatives)
        if overlap:
            raise ValueError(f"feedback sets overlap: {sorted(overlap)}")


@dataclass(frozen=True)
class RankedImage:
    image_id: int
    score: float


@dataclass(frozen=True)
class Ranking:
    """Images ordered by ascending score, ties broken by ascending id."""

    entries: tuple[RankedImage, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RankedImage]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def top(self, k: int) -> tuple[RankedImage, ...]:
        return self.entries[:k]

    def ids(self) -> tuple[int, ...]:
        return tuple(e.image_id for e in self.entries)


@dataclass
class IterationRecord:
    """History of one iteration: the page shown and the feedback it drew."""

    iteration: int
    shown: tuple[int, ...]
    positives: tuple[int, ...] = ()
    negatives: tuple[int, ...] = ()


@dataclass
class SessionState:
    """All learning for one query session; discarded when the session ends."""

    session_id: str
    query: QuerySignature
    penalty_tables: dict[int, PenaltyTable] = field(default_factory=dict)
    iteration: int = 1
    history: list[IterationRecord] = field(default_factory=list)


class Corpus:
    """An immutable set of image signatures with a cached stack for scans."""

    def __init__(self, signatures: Sequence[ImageSignature]):
        self._signatures = tuple(signatures)
        ids = [sig.image_id for sig in self._signatures]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in corpus")
        self._rows = {img_id: row for row, img_id in enumerate(ids)}
        self._ids = np.array(ids, dtype=np.int64)
        self._stack: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._signatures)

    def __iter__(self) -> Iterator[ImageSignature]:
        return iter(self._signatures)

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    def get(self, image_id: int) -> ImageSignature:
        return self._signatures[self._rows[image_id]]

    def row_of(self, image_id: int) -> int:
        return self._rows[image_id]

    @property
    def leaf_stack(self) -> np.ndarray:
        """All leaf histograms as one (N, 16, bins) int16 array."""
        if self._stack is None:
            bins = {sig.leaves.shape for sig in self._signatures}
            if len(bins) > 1:
                raise ValueError(f"mixed signature shapes in corpus: {sorted(bins)}")
            self._stack = np.stack([sig.leaves for sig in self._signatures]).astype(np.int16)
        return self._stack


def pairwise_leaf_distances(a: ImageSignature, b: ImageSignature) -> np.ndarray:
    """(16, 16) histogram distances between every leaf of a and of b."""
    la = a.leaves.astype(np.int16)
    lb = b.leaves.astype(np.int16)
    if la.shape != lb.shape:
        raise ValueError(f"signature shapes differ: {la.shape} vs {lb.shape}")
    return (
        np.abs(la[:, None, :] - lb[None, :, :]).sum(axis=2, dtype=np.int64).astype(np.float64)
    )


def _min_tile_distances(leaf_dists: np.ndarray) -> np.ndarray:
    """Per tile of the row image, the minimum distance to the column image.

    The root has exactly one counterpart (positional leaf pairing); tiles at
    the two finer levels take the minimum over all same-level tiles of the
    other image. Returns a (26,) array indexed by tile id.
    """
    root = leaf_dists[_LEAF_DIAG, _LEAF_DIAG].mean()
    # [t, u, k]: leaf k of row tile t against leaf k of column tile u
    blocks = leaf_dists[_BLOCKS[:, None, :], _BLOCKS[None, :, :]]
    level1 = blocks.mean(axis=2).min(axis=1)
    leaves = leaf_dists.min(axis=1)
    return np.concatenate(([root], level1, leaves))


def _tile_set_consistency(image: ImageSignature, image_set: Sequence[ImageSignature]) -> np.ndarray:
    """exp-sum consistency of all 26 tiles of ``image`` against an image set."""
    acc = np.zeros(TILE_COUNT)
    for other in image_set:
        acc += np.exp(_min_tile_distances(pairwise_leaf_distances(image, other)))
    return acc


def dts(image: ImageSignature, tile_id: int, image_set: Sequence[ImageSignature]) -> float:
    """Consistency of one tile with an image set: sum of exp(min distance).

    Small values mean the tile's content recurs across the set; the result is
    always at least len(image_set) because exp(d) >= 1.
    """
    tile_info(tile_id)  # range check
    if not image_set:
        raise ValueError("image set must not be empty")
    total = 0.0
    for other in image_set:
        dists = _min_tile_distances(pairwise_leaf_distances(image, other))
        total += math.exp(dists[tile_id])
    return total


def update_penalties(
    positive: ImageSignature,
    positives: Sequence[ImageSignature],
    negatives: Sequence[ImageSignature],
    iteration: int,
) -> PenaltyTable:
    """Re-estimate the 26 tile penalties of one positively marked image.

    Tiles consistent with the positive set get low penalties; consistency
    with the negative set shrinks a tile's weight. With no negatives all
    weights are 1 and the penalties are the normalized positive
    consistencies alone.
    """
    if not positives:
        raise ValueError("positives must not be empty")
    if positive.image_id not in {sig.image_id for sig in positives}:
        raise ValueError(f"image {positive.image_id} is not in the positive set")
    consistency_pos = _tile_set_consistency(positive, positives)
    if negatives:
        consistency_neg = _tile_set_consistency(positive, negatives)
        weights = 1.0 - consistency_neg / consistency_neg.sum()
    else:
        weights = np.ones(TILE_COUNT)
    scores = weights * consistency_pos
    return PenaltyTable(
        image_id=positive.image_id,
        penalties=scores / scores.sum(),
        iteration=iteration,
    )


def _integer_weights(weights: Sequence[float]) -> list[int]:
    """Scale binary-float weights to exact integers on a common denominator."""
    ratios = [float(w).as_integer_ratio() for w in weights]
    for w, (num, _) in zip(weights, ratios):
        if num <= 0:
            raise ValueError(f"weights must be positive, got {w}")
    common = max(den for _, den in ratios)
    return [num * (common // den) for num, den in ratios]


def _exact_bin_sums(stacks: np.ndarray, weights: Sequence[float]) -> tuple[list[int], int]:
    """Per-bin integer numerators and the shared denominator of the mean."""
    ints = _integer_weights(weights)
    den = sum(ints)
    flat = stacks.reshape(len(ints), -1)
    nums = [
        sum(w * int(x) for w, x in zip(ints, col)) for col in flat.T.tolist()
    ]
    return nums, den


def weighted_feature_mean(stacks: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """Weighted per-bin mean of integer feature stacks, exactly accumulated.

    Weights are binary floats; scaling them onto a common power-of-two
    denominator turns the accumulation into exact integer arithmetic, so
    equal weights reduce to the exact arithmetic mean and .5 ties survive
    intact to the rounding step. Each returned double is correctly rounded.
    """
    stacks = np.asarray(stacks, dtype=np.int64)
    if stacks.ndim < 2 or stacks.shape[0] != len(weights):
        raise ValueError(
            f"expected ({len(weights)}, ...) feature stacks, got shape {stacks.shape}"
        )
    nums, den = _exact_bin_sums(stacks, weights)
    out = np.array([num / den for num in nums], dtype=np.float64)
    return out.reshape(stacks.shape[1:])


def _discretized_weighted_mean(stacks: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """Weighted mean rounded half up to the stored [0, 9] bin range."""
    stacks = np.asarray(stacks, dtype=np.int64)
    nums, den = _exact_bin_sums(stacks, weights)
    rounded = [min(max((2 * num + den) // (2 * den), 0), 9) for num in nums]
    return np.array(rounded, dtype=np.uint8).reshape(stacks.shape[1:])


def refine_query(
    query: QuerySignature,
    positives: Sequence[ImageSignature],
    penalty_tables: Mapping[int, PenaltyTable],
) -> QuerySignature:
    """Move the query toward the minimum-penalty tiles of the positives.

    At each granularity, every positive image contributes the leaf
    histograms of its cheapest same-level tile (ties to the lowest tile id),
    weighted by one minus that penalty. The whole-query layer follows the
    cheapest leaves, the quadrant layer the cheapest half-size tiles, and
    the cell layer the roots. With no positives the query is unchanged.
    """
    if not positives:
        return query
    level_slices = {0: (0, 1), 1: (1, 10), 2: (10, TILE_COUNT)}
    new_layers: dict[int, np.ndarray] = {}
    for level, (lo, hi) in level_slices.items():
        stacks = []
        weights = []
        for sig in positives:
            table = penalty_tables[sig.image_id].penalties
            offset = int(np.argmin(table[lo:hi]))  # first minimum = lowest tile id
            stacks.append(sig.tile_leaves(lo + offset))
            weights.append(1.0 - float(table[lo + offset]))
        new_layers[level] = _discretized_weighted_mean(np.stack(stacks), weights)
    return QuerySignature(g1=new_layers[2], g2=new_layers[1], g4=new_layers[0])


def rank_images(
    query: QuerySignature,
    corpus: Corpus,
    penalty_tables: Mapping[int, PenaltyTable] | None = None,
) -> Ranking:
    """Order the corpus by penalty-weighted minimum tile distance.

    For each image the score is min over its 26 tiles of penalty times the
    distance between the tile and the query shrunk to that tile's level.
    Ascending score, ties broken by ascending image id.
    """
    if len(corpus) == 0:
        raise ValueError("corpus must not be empty")
    stack = corpus.leaf_stack  # (N, 16, bins) int16
    bins = stack.shape[2]
    for layer in (query.g1, query.g2, query.g4):
        if layer.shape[1] != bins:
            raise ValueError(
                f"query bins ({layer.shape[1]}) do not match corpus bins ({bins})"
            )
    g4 = query.g4.astype(np.int16)
    g2 = query.g2.astype(np.int16)
    g1 = query.g1.astype(np.int16)

    # Distances from every stored leaf to the query layer it can pair with.
    dt_root = np.abs(stack - g4[None, :, :]).sum(axis=2, dtype=np.int64).mean(axis=1)
    quad = np.empty((len(corpus), LEAF_COUNT, 4))
    for q in range(4):
        quad[:, :, q] = np.abs(stack - g2[q][None, None, :]).sum(axis=2, dtype=np.int64)
    # [n, t, k]: leaf k of tile t against quadrant k; mean over the block
    dt_level1 = quad[:, _BLOCKS, _BLOCK_POS].mean(axis=2)
    dt_leaves = np.abs(stack - g1[0][None, None, :]).sum(axis=2, dtype=np.int64).astype(np.float64)

    tp = np.tile(uniform_penalties(), (len(corpus), 1))
    if penalty_tables:
        for image_id, table in penalty_tables.items():
            tp[corpus.row_of(image_id)] = table.penalties
    weighted = np.concatenate(
        [tp[:, :1] * dt_root[:, None], tp[:, 1:10] * dt_level1, tp[:, 10:] * dt_leaves],
        axis=1,
    )
    scores = weighted.min(axis=1)
    order = np.lexsort((corpus.ids, scores))
    return Ranking(
        entries=tuple(
            RankedImage(image_id=int(corpus.ids[i]), score=float(scores[i])) for i in order
        )
    )


def start_session(
    session_id: str, query: QuerySignature, corpus: Corpus, page_size: int = 20
) -> tuple[Ranking, SessionState]:
    """Rank with uniform penalties and open a fresh session history."""
    ranking = rank_images(query, corpus)
    state = SessionState(session_id=session_id, query=query)
    state.history.append(
        IterationRecord(iteration=1, shown=tuple(e.image_id for e in ranking.top(page_size)))
    )
    return ranking, state


def run_iteration(
    session: SessionState,
    feedback: FeedbackSet,
    corpus: Corpus,
    page_size: int = 20,
) -> tuple[Ranking, SessionState]:
    """Fold one round of feedback into the session and re-rank.

    Every positive image gets a fresh penalty table (tables persist across
    later iterations until the image is marked positive again), the query is
    refined from the positives, and the corpus is re-ranked with the revised
    query and tables. Empty feedback degenerates to re-ranking unchanged
    state, which reproduces the previous ordering.
    """
    if session.history:
        last = session.history[-1]
        shown = set(last.shown)
        stray = [i for i in (*feedback.positives, *feedback.negatives) if i not in shown]
        if stray:
            raise ValueError(f"feedback ids not on the last shown page: {sorted(set(stray))}")
        last.positives = feedback.positives
        last.negatives = feedback.negatives
    if feedback.positives:
        pos_sigs = [corpus.get(i) for i in feedback.positives]
        neg_sigs = [corpus.get(i) for i in feedback.negatives]
        for sig in pos_sigs:
            session.penalty_tables[sig.image_id] = update_penalties(
                sig, pos_sigs, neg_sigs, session.iteration
            )
        session.query = refine_query(session.query, pos_sigs, session.penalty_tables)
    session.iteration += 1
    ranking = rank_images(session.query, corpus, session.penalty_tables)
    session.history.append(
        IterationRecord(
            iteration=session.iteration,
            shown=tuple(e.image_id for e in ranking.top(page_size)),
        )
    )
    return ranking, session
