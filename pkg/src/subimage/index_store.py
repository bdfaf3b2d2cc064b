"""Single-file binary index: header, inline catalog, nibble-packed payload.

The byte layout is specified in FORMAT.md. All integers are little-endian
and fixed-width. Each image's payload is its 16 leaf histograms packed two
bins per byte, low nibble first, which is 16 * paletteSize bytes per image.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .color_features import PALETTE_LEVELS
from .tiling import LEAF_COUNT, ImageSignature

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "IndexFormatError",
    "IndexHeader",
    "CatalogEntry",
    "payload_size",
    "pack_signature",
    "unpack_signature",
    "write_index",
    "load_index",
]

MAGIC = b"SBIX"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHII")  # magic, version, paletteSize, imageCount, flags
_CATALOG_FIXED = struct.Struct("<IIH")  # width, height, path byte length
_MAX_BIN = 9


class IndexFormatError(ValueError):
    """Raised when an index file cannot be parsed; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class IndexHeader:
    version: int
    palette_size: int
    image_count: int
    flags: int = 0


@dataclass(frozen=True)
class CatalogEntry:
    image_id: int
    path: str
    width: int
    height: int


def payload_size(image_count: int, palette_size: int) -> int:
    """Exact payload bytes: imageCount * 16 leaves * 2M bins * 4 bits."""
    return image_count * LEAF_COUNT * palette_size


def pack_signature(leaves: np.ndarray) -> bytes:
    """Pack (16, 2M) discretized bins into 16 * M bytes, low nibble first."""
    leaves = np.asarray(leaves)
    if leaves.ndim != 2 or leaves.shape[0] != LEAF_COUNT or leaves.shape[1] % 2:
        raise ValueError(f"expected a (16, 2M) bin array, got shape {leaves.shape}")
    bins = leaves.astype(np.uint8).ravel()
    if bins.max(initial=0) > _MAX_BIN:
        raise ValueError(f"bin value above {_MAX_BIN} cannot be stored")
    return (bins[0::2] | (bins[1::2] << 4)).tobytes()


def unpack_signature(buf: bytes, palette_size: int) -> np.ndarray:
    """Inverse of pack_signature; returns a (16, 2M) uint8 array."""
    expected = LEAF_COUNT * palette_size
    if len(buf) != expected:
        raise ValueError(f"expected {expected} payload bytes, got {len(buf)}")
    packed = np.frombuffer(buf, dtype=np.uint8)
    bins = np.empty(packed.size * 2, dtype=np.uint8)
    bins[0::2] = packed & 0x0F
    bins[1::2] = packed >> 4
    return bins.reshape(LEAF_COUNT, 2 * palette_size)


def write_index(
    signatures: Sequence[ImageSignature],
    catalog: Sequence[CatalogEntry],
    path: str | Path,
) -> int:
    """Write a complete index file; returns the number of bytes written.

    Image ids must be dense 0..N-1 with signatures and catalog in id order,
    and every signature must share one supported palette size.
    """
    if len(signatures) != len(catalog):
        raise ValueError(
            f"{len(signatures)} signatures but {len(catalog)} catalog entries"
        )
    for i, (sig, entry) in enumerate(zip(signatures, catalog)):
        if sig.image_id != i or entry.image_id != i:
            raise ValueError(f"image ids must be dense and ordered; slot {i} is off")
    palette_sizes = {sig.palette_size for sig in signatures}
    if len(palette_sizes) > 1:
        raise ValueError(f"mixed palette sizes: {sorted(palette_sizes)}")
    palette_size = palette_sizes.pop() if palette_sizes else 64
    if palette_size not in PALETTE_LEVELS:
        raise ValueError(f"unsupported palette size {palette_size}")

    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, palette_size, len(signatures), 0)]
    for entry in catalog:
        encoded = entry.path.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"path too long for catalog: {entry.path!r}")
        parts.append(_CATALOG_FIXED.pack(entry.width, entry.height, len(encoded)))
        parts.append(encoded)
    for sig in signatures:
        parts.append(pack_signature(sig.leaves))
    blob = b"".join(parts)
    Path(path).write_bytes(blob)
    return len(blob)


def load_index(path: str | Path) -> tuple[IndexHeader, list[CatalogEntry], list[ImageSignature]]:
    """Parse an index file, validating structure byte by byte.

    Corruption (bad magic, unsupported version or palette, truncation,
    out-of-range bins, trailing bytes) raises IndexFormatError naming the
    offending byte offset.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise IndexFormatError(f"file too short for a {_HEADER.size}-byte header", len(data))
    magic, version, palette_size, image_count, flags = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise IndexFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported format version {version}", 4)
    if palette_size not in PALETTE_LEVELS:
        raise IndexFormatError(f"unsupported palette size {palette_size}", 6)

    offset = _HEADER.size
    entries: list[CatalogEntry] = []
    for image_id in range(image_count):
        if offset + _CATALOG_FIXED.size > len(data):
            raise IndexFormatError(
                f"truncated catalog entry {image_id} of {image_count}", offset
            )
        width, height, path_len = _CATALOG_FIXED.unpack_from(data, offset)
        offset += _CATALOG_FIXED.size
        if offset + path_len > len(data):
            raise IndexFormatError(f"truncated path in catalog entry {image_id}", offset)
        try:
            entry_path = data[offset : offset + path_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IndexFormatError(
                f"catalog entry {image_id} path is not valid UTF-8: {exc}", offset
            ) from None
        offset += path_len
        entries.append(CatalogEntry(image_id=image_id, path=entry_path, width=width, height=height))

    per_image = LEAF_COUNT * palette_size
    need = payload_size(image_count, palette_size)
    if offset + need > len(data):
        raise IndexFormatError(
            f"truncated payload: need {need} bytes, have {len(data) - offset}",
            len(data),
        )
    signatures: list[ImageSignature] = []
    for image_id in range(image_count):
        start = offset + image_id * per_image
        leaves = unpack_signature(data[start : start + per_image], palette_size)
        if leaves.max(initial=0) > _MAX_BIN:
            bad = int(np.argmax(leaves.ravel() > _MAX_BIN))
            raise IndexFormatError(
                f"bin value above {_MAX_BIN} in image {image_id}", start + bad // 2
            )
        signatures.append(ImageSignature(image_id=image_id, leaves=leaves))
    offset += need
    if offset != len(data):
        raise IndexFormatError(f"{len(data) - offset} trailing bytes after payload", offset)
    header = IndexHeader(
        version=version, palette_size=palette_size, image_count=image_count, flags=flags
    )
    return header, entries, signatures
