"""Sub-image retrieval with tile re-weighting relevance feedback."""

from .color_features import PixelClassMap, class_map_from_rgb
from .feedback import (
    Corpus,
    FeedbackSet,
    PenaltyTable,
    Ranking,
    SessionState,
    rank_images,
    run_iteration,
    start_session,
)
from .index_store import CatalogEntry, IndexHeader, load_index, write_index
from .tiling import (
    ImageSignature,
    QuerySignature,
    build_image_signature,
    build_query_signature,
)

__version__ = "0.1.0"

__all__ = [
    "PixelClassMap",
    "class_map_from_rgb",
    "Corpus",
    "FeedbackSet",
    "PenaltyTable",
    "Ranking",
    "SessionState",
    "rank_images",
    "run_iteration",
    "start_session",
    "CatalogEntry",
    "IndexHeader",
    "load_index",
    "write_index",
    "ImageSignature",
    "QuerySignature",
    "build_image_signature",
    "build_query_signature",
    "__version__",
]
