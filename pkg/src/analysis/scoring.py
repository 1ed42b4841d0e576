"""Query-vs-history relevance scores S = H^emb . q^emb."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.collectors.embedders import EmbeddingProvider, validate_batch
from src.errors import DimensionError


@dataclass(frozen=True)
class QueryEmbedding:
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


def embed_query(provider: EmbeddingProvider, query_text: str) -> QueryEmbedding:
    """Only the new user query is encoded at inference time."""
    vector = validate_batch(provider.embed([query_text]), 1, provider.dim)[0]
    return QueryEmbedding(np.asarray(vector, dtype=np.float64))


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


def score_history(history, q: QueryEmbedding | np.ndarray, cosine: bool = False) -> list[float]:
    """Inner product of every history row with q, in turn order.

    ``cosine=True`` L2-normalizes rows and query first; zero vectors score 0.
    """
    view = history.snapshot()
    vector = q.vector if isinstance(q, QueryEmbedding) else np.asarray(q, dtype=np.float64).reshape(-1)
    if len(view) == 0:
        return []
    if view.dim != vector.shape[0]:
        raise DimensionError(
            "query_dim_mismatch",
            f"Query has {vector.shape[0]} components, history rows have {view.dim}",
        )
    rows = view.vectors.astype(np.float64)
    if cosine:
        rows = _unit_rows(rows)
        vector = _unit_rows(vector[None, :])[0]
    return (rows @ vector).tolist()
