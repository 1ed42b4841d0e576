"""Append-only dialogue history: turns and their embedding rows.

A ``DialogueHistory`` is written by one writer at a time (appends hold the
instance lock) and read through immutable ``HistoryView`` snapshots, so turn
count and row count always agree for any reader.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from src.collectors.embedders import EmbeddingProvider, validate_batch
from src.errors import DimensionError, NonFiniteError, TurnIndexConflictError
from src.models.data_models import TurnRecord, render_turn


class EmbeddingMatrix:
    """Growable row store with a fixed dimension once the first row lands.

    Rows are held at binary32, the precision of the cache format, so a stored
    row equals the provider vector cast to float32.
    """

    def __init__(self, dim: int | None = None, capacity: int = 64):
        if dim is not None and dim < 1:
            raise DimensionError("bad_dim", f"dim must be >= 1, got {dim}")
        self._dim = dim
        self._count = 0
        self._data = np.empty((capacity, dim or 0), dtype=np.float32)

    @classmethod
    def from_array(cls, rows: np.ndarray) -> "EmbeddingMatrix":
        rows = np.asarray(rows, dtype=np.float32)
        if rows.ndim != 2:
            raise DimensionError("bad_shape", f"Expected a 2-D matrix, got shape {rows.shape}")
        matrix = cls(rows.shape[1] or None, capacity=max(rows.shape[0], 1))
        for row in rows:
            matrix.append(row)
        return matrix

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def count(self) -> int:
        return self._count

    def __len__(self) -> int:
        return self._count

    def rows(self, upto: int | None = None) -> np.ndarray:
        """Read-only view of the first ``upto`` rows (all rows by default)."""
        n = self._count if upto is None else min(upto, self._count)
        view = self._data[:n]
        view.flags.writeable = False
        return view

    def check(self, vector: np.ndarray) -> np.ndarray:
        row = np.asarray(vector, dtype=np.float32).reshape(-1)
        if self._dim is not None and row.shape[0] != self._dim:
            raise DimensionError(
                "dim_mismatch",
                f"Embedding has {row.shape[0]} components, store expects {self._dim}",
            )
        if row.shape[0] == 0:
            raise DimensionError("bad_dim", "Embedding has no components")
        if not np.isfinite(row).all():
            raise NonFiniteError("non_finite", "Embedding contains non-finite components")
        return row

    def append(self, vector: np.ndarray) -> None:
        row = self.check(vector)
        if self._dim is None:
            self._dim = row.shape[0]
            self._data = np.empty((max(self._data.shape[0], 1), self._dim), dtype=np.float32)
        if self._count == self._data.shape[0]:
            # old buffer stays intact for outstanding views
            grown = np.empty((self._data.shape[0] * 2, self._dim), dtype=np.float32)
            grown[: self._count] = self._data[: self._count]
            self._data = grown
        self._data[self._count] = row
        self._count += 1


@dataclass(frozen=True)
class HistoryView:
    """Consistent, immutable prefix of a dialogue history."""
    dialogue_id: str
    turns: tuple[TurnRecord, ...]
    vectors: np.ndarray

    def __len__(self) -> int:
        return len(self.turns)

    @property
    def dim(self) -> int | None:
        return self.vectors.shape[1] if self.vectors.ndim == 2 and self.vectors.shape[1] else None

    def snapshot(self) -> "HistoryView":
        return self

    def view(self, upto: int) -> "HistoryView":
        upto = max(0, min(upto, len(self.turns)))
        return HistoryView(self.dialogue_id, self.turns[:upto], self.vectors[:upto])


class DialogueHistory:
    def __init__(self, dialogue_id: str, dim: int | None = None):
        self.dialogue_id = dialogue_id
        self.embeddings = EmbeddingMatrix(dim)
        self._turns: list[TurnRecord] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._turns)

    @property
    def dim(self) -> int | None:
        return self.embeddings.dim

    @property
    def turns(self) -> tuple[TurnRecord, ...]:
        return self.snapshot().turns

    def snapshot(self) -> HistoryView:
        with self._lock:
            n = len(self._turns)
            return HistoryView(self.dialogue_id, tuple(self._turns[:n]), self.embeddings.rows(n))

    def view(self, upto: int) -> HistoryView:
        return self.snapshot().view(upto)

    def append(
        self,
        user_text: str,
        agent_text: str,
        vector: np.ndarray,
        expected_index: int | None = None,
    ) -> TurnRecord:
        """Append one turn with its precomputed embedding row."""
        with self._lock:
            index = len(self._turns) + 1
            if expected_index is not None and expected_index != index:
                raise TurnIndexConflictError(
                    "turn_index_conflict",
                    f"Dialogue '{self.dialogue_id}' expects turn {index}, got {expected_index}",
                )
            self.embeddings.append(vector)
            record = TurnRecord.create(index, user_text, agent_text)
            self._turns.append(record)
            return record

    @classmethod
    def from_rows(
        cls,
        dialogue_id: str,
        turns: Sequence[TurnRecord],
        rows: np.ndarray,
    ) -> "DialogueHistory":
        rows = np.asarray(rows)
        if rows.shape[0] != len(turns):
            raise DimensionError(
                "row_count_mismatch",
                f"Dialogue '{dialogue_id}' has {len(turns)} turns but {rows.shape[0]} embedding rows",
            )
        history = cls(dialogue_id)
        for turn, row in zip(turns, rows):
            history.append(turn.user_text, turn.agent_text, row)
        return history


def append_turn(
    history: DialogueHistory,
    user_text: str,
    agent_text: str,
    embedder: EmbeddingProvider,
    expected_index: int | None = None,
) -> DialogueHistory:
    """Embed the rendered turn once and append it."""
    unit = render_turn(user_text, agent_text)
    vector = validate_batch(embedder.embed([unit]), 1, None)[0]
    history.append(user_text, agent_text, vector, expected_index=expected_index)
    return history


def extend_turns(
    history: DialogueHistory,
    pairs: Iterable[tuple[str, str]],
    embedder: EmbeddingProvider,
) -> DialogueHistory:
    """Batch ``append_turn``: one embedding per turn, one provider call."""
    pairs = list(pairs)
    if not pairs:
        return history
    units = [render_turn(user, agent) for user, agent in pairs]
    vectors = validate_batch(embedder.embed(units), len(units), None)
    for (user, agent), vector in zip(pairs, vectors):
        history.append(user, agent, vector)
    return history
