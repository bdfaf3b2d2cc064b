import numpy as np
import pytest
from PIL import Image

from subimage.color_features import class_map_from_rgb
from subimage.feedback import Corpus
from subimage.index_store import CatalogEntry, write_index
from subimage.synth import generate_corpus
from subimage.tiling import build_image_signature, build_query_signature


_CONFIG = None


def pytest_configure(config):
    global _CONFIG
    _CONFIG = config


def announce(line: str) -> None:
    """Print one line on the real terminal, bypassing pytest's capture."""
    capman = _CONFIG.pluginmanager.getplugin("capturemanager") if _CONFIG else None
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)


def random_leaves(rng: np.random.Generator, palette_size: int = 64) -> np.ndarray:
    """Random but valid discretized leaf stack: (16, 2M) bins in [0, 9]."""
    return rng.integers(0, 10, size=(16, 2 * palette_size), dtype=np.uint8)


def random_corpus(rng: np.random.Generator, n: int, palette_size: int = 64) -> Corpus:
    from subimage.tiling import ImageSignature

    return Corpus(
        [ImageSignature(image_id=i, leaves=random_leaves(rng, palette_size)) for i in range(n)]
    )


def random_query(rng: np.random.Generator, palette_size: int = 64):
    from subimage.tiling import QuerySignature

    bins = 2 * palette_size
    return QuerySignature(
        g1=rng.integers(0, 10, size=(1, bins), dtype=np.uint8),
        g2=rng.integers(0, 10, size=(4, bins), dtype=np.uint8),
        g4=rng.integers(0, 10, size=(16, bins), dtype=np.uint8),
    )


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """A small generated corpus shared by integration-level tests."""
    out = tmp_path_factory.mktemp("synth")
    result = generate_corpus(out, n_backgrounds=40, n_queries=2, seed=9)
    return out, result


@pytest.fixture(scope="session")
def synth_signatures(synth_corpus):
    """Signatures (M=64) for every image of the small synthetic corpus."""
    _, result = synth_corpus
    signatures = []
    for i, path in enumerate(result.image_paths):
        rgb = np.asarray(Image.open(path))
        signatures.append(build_image_signature(class_map_from_rgb(rgb, 64), i))
    return signatures


@pytest.fixture(scope="session")
def synth_engine(synth_corpus, synth_signatures):
    """Corpus object plus one query signature from the synthetic data."""
    _, result = synth_corpus
    corpus = Corpus(synth_signatures)
    rgb = np.asarray(Image.open(result.query_paths[0]))
    query = build_query_signature(class_map_from_rgb(rgb, 64))
    return corpus, query, result


@pytest.fixture(scope="session")
def synth_index(synth_corpus, synth_signatures, tmp_path_factory):
    """The small synthetic corpus written as an index file."""
    _, result = synth_corpus
    catalog = [
        CatalogEntry(image_id=i, path=str(p), width=128, height=128)
        for i, p in enumerate(result.image_paths)
    ]
    path = tmp_path_factory.mktemp("index") / "synth.sbix"
    write_index(synth_signatures, catalog, path)
    return path
