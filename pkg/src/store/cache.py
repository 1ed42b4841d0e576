"""Binary embedding cache.

Layout (little-endian, no padding, no trailing bytes)::

    magic    8 bytes   b"DYCPEMB1"
    version  u32       1
    dim      u32
    count    u32
    payload  count * dim float32, row-major
"""

from __future__ import annotations

import logging
import os
import re
import struct
from pathlib import Path

import numpy as np

from src.errors import CacheCorruptionError, CacheFormatError
from src.models.data_models import DialogueSource
from src.store.history import DialogueHistory, EmbeddingMatrix

logger = logging.getLogger(__name__)

MAGIC = b"DYCPEMB1"
VERSION = 1
HEADER = struct.Struct("<8sIII")
CACHE_SUFFIX = ".emb"


def cache_path(cache_dir: Path, dialogue_id: str) -> Path:
    safe = re.sub(r"[^A-Za-z0-9_.-]", "_", dialogue_id) or "_"
    return Path(cache_dir) / f"{safe}{CACHE_SUFFIX}"


def encode_cache(rows: np.ndarray) -> bytes:
    rows = np.asarray(rows, dtype="<f4")
    if rows.ndim != 2:
        rows = rows.reshape(0, 0)
    count, dim = rows.shape
    return HEADER.pack(MAGIC, VERSION, dim, count) + np.ascontiguousarray(rows).tobytes()


def decode_cache(blob: bytes, source: str = "<bytes>") -> EmbeddingMatrix:
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise CacheFormatError("cache_bad_magic", f"{source}: not an embedding cache (bad magic)")
    if len(blob) < HEADER.size:
        raise CacheCorruptionError("cache_truncated", f"{source}: header is truncated")
    _, version, dim, count = HEADER.unpack_from(blob)
    if version != VERSION:
        raise CacheFormatError("cache_bad_version", f"{source}: unsupported cache version {version}")
    if count and not dim:
        raise CacheCorruptionError("cache_bad_dim", f"{source}: {count} rows declared with dim 0")
    expected = count * dim * 4
    payload = blob[HEADER.size:]
    if len(payload) != expected:
        raise CacheCorruptionError(
            "cache_size_mismatch",
            f"{source}: header declares {count}x{dim} ({expected} bytes), payload has {len(payload)} bytes",
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)
    matrix = EmbeddingMatrix(dim or None, capacity=max(count, 1))
    for row in rows:
        matrix.append(row)
    return matrix


def save_cache(history: DialogueHistory | EmbeddingMatrix, path: Path) -> Path:
    """Write the embedding rows of ``history`` to ``path`` atomically."""
    matrix = history.embeddings if isinstance(history, DialogueHistory) else history
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_cache(matrix.rows()))
    os.replace(tmp, path)
    logger.debug("wrote %d x %s cache to %s", matrix.count, matrix.dim, path)
    return path


def load_cache(path: Path) -> EmbeddingMatrix:
    path = Path(path)
    return decode_cache(path.read_bytes(), source=str(path))


def attach_cache(source: DialogueSource, matrix: EmbeddingMatrix) -> DialogueHistory:
    """Rebuild a history from dataset text plus cached rows (counts must agree)."""
    if matrix.count != len(source.turns):
        raise CacheCorruptionError(
            "cache_count_mismatch",
            f"Cache for '{source.dialogue_id}' has {matrix.count} rows, dataset has {len(source.turns)} turns",
        )
    return DialogueHistory.from_rows(source.dialogue_id, source.turns, matrix.rows())
