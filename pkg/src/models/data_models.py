"""Internal data models used across the application."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

from src.config import PruneConfig

MASKED = None
"""Gain sentinel for turns already claimed by an extracted span."""


def render_turn(user_text: str, agent_text: str) -> str:
    """Text embedded for a turn."""
    return f"User: {user_text}\nAgent: {agent_text}"


@dataclass(frozen=True)
class ScoreSequence:
    """Raw relevance scores with their z-normalization and gain shift."""
    raw: tuple[float, ...]
    mean: float = 0.0
    std: float = 0.0
    z: tuple[float, ...] = ()
    gains: tuple[Optional[float], ...] = ()

    def __len__(self) -> int:
        return len(self.raw)


@dataclass(frozen=True)
class Span:
    """Inclusive 1-based turn interval with its cumulative gain at extraction."""
    start: int
    end: int
    gain: float

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def turns(self) -> range:
        return range(self.start, self.end + 1)


@dataclass(frozen=True)
class SpanSet:
    spans: tuple[Span, ...] = ()

    def __len__(self) -> int:
        return len(self.spans)

    def __iter__(self) -> Iterator[Span]:
        return iter(self.spans)

    @property
    def chronological(self) -> tuple[Span, ...]:
        return tuple(sorted(self.spans, key=lambda s: s.start))

    @property
    def turn_indices(self) -> tuple[int, ...]:
        return tuple(sorted(i for s in self.spans for i in s.turns()))


@dataclass(frozen=True)
class TurnRecord:
    index: int
    user_text: str
    agent_text: str
    encoded_unit: str

    @classmethod
    def create(cls, index: int, user_text: str, agent_text: str) -> "TurnRecord":
        return cls(index, user_text, agent_text, render_turn(user_text, agent_text))


@dataclass(frozen=True)
class SegmentStats:
    """RS (segments retrieved), TpS (mean turns per segment) and the turn total."""
    retrieved_segments: int = 0
    turns_per_segment: float = 0.0
    turns_total: int = 0

    @classmethod
    def from_lengths(cls, lengths: list[int]) -> "SegmentStats":
        total = sum(lengths)
        rs = len(lengths)
        return cls(rs, total / rs if rs else 0.0, total)


@dataclass(frozen=True)
class PrunedSelection:
    """Pruned history for one query, plus the accounting around it."""
    method: str
    spans: SpanSet
    turn_indices: tuple[int, ...]
    rendered_context: str
    stats: SegmentStats
    token_full: int
    token_pruned: int
    ranking: tuple[int, ...] = ()
    scores: Optional[ScoreSequence] = None
    selected_turns: tuple[TurnRecord, ...] = ()


METHOD_KINDS = ("dycp", "full", "none", "topk", "bottom")


@dataclass(frozen=True)
class MethodSpec:
    """A context-selection method.

    ``topk`` with ``k=None`` means auto-matched to DyCP's mean turn budget.
    ``bottom`` is DyCP followed by per-span removal of the ``bottom`` lowest turns.
    """
    kind: str
    k: Optional[int] = None
    bottom: Optional[int] = None
    config: PruneConfig = field(default_factory=PruneConfig)

    def __post_init__(self) -> None:
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"Unknown method kind '{self.kind}'")
        if self.kind == "topk" and self.k is not None and self.k < 1:
            raise ValueError(f"topk needs k >= 1, got {self.k}")
        if self.kind == "bottom" and (self.bottom is None or self.bottom < 1):
            raise ValueError("bottom needs m >= 1")

    @classmethod
    def parse(cls, text: str, config: PruneConfig | None = None) -> "MethodSpec":
        """Parse ``dycp``, ``full``, ``none``, ``topk:<k>``, ``topk:auto`` or ``bottom:<m>``."""
        cfg = config or PruneConfig()
        kind, _, arg = text.strip().lower().partition(":")
        if kind == "topk":
            if arg in ("", "auto"):
                return cls("topk", None, config=cfg)
            return cls("topk", int(arg), config=cfg)
        if kind == "bottom":
            return cls("bottom", bottom=int(arg or 1), config=cfg)
        return cls(kind, config=cfg)

    @property
    def label(self) -> str:
        if self.kind == "topk":
            return f"topk:{self.k if self.k is not None else 'auto'}"
        if self.kind == "bottom":
            return f"bottom:{self.bottom}"
        return self.kind

    @property
    def is_auto(self) -> bool:
        return self.kind == "topk" and self.k is None


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    query: str
    gold_answer: str
    gold_turns: frozenset[int]
    asked_after_turn: int


@dataclass(frozen=True)
class DialogueSource:
    """A dialogue as read from a dataset file, before embedding."""
    dialogue_id: str
    turns: tuple[TurnRecord, ...]


@dataclass
class RetrievalRow:
    """Per-case retrieval metrics; ``skipped`` when the case has no gold turns."""
    hit_at: dict[int, float] = field(default_factory=dict)
    recall_at: dict[int, float] = field(default_factory=dict)
    precision_at: dict[int, float] = field(default_factory=dict)
    hit: float = 0.0
    recall: float = 0.0
    precision: float = 0.0
    matched: int = 0
    gold_size: int = 0
    selected_size: int = 0
    skipped: bool = False


@dataclass
class RetrievalReport:
    method: str
    hit_at: dict[int, float] = field(default_factory=dict)
    recall_at: dict[int, float] = field(default_factory=dict)
    precision_at: dict[int, float] = field(default_factory=dict)
    hit: float = 0.0
    recall: float = 0.0
    precision: float = 0.0
    cases: int = 0
    skipped: int = 0


@dataclass
class CaseResult:
    dialogue_id: str
    case_index: int
    query: str
    turns: tuple[int, ...]
    rs: int
    tps: float
    turns_total: int
    token_full: int
    token_pruned: int
    prune_ms: float
    metrics: RetrievalRow
    error: Optional[str] = None
    first_token_ms: Optional[float] = None
    exact_match: Optional[bool] = None
    judge_rating: Optional[int] = None


@dataclass
class RunRecord:
    method: str
    params: dict
    report: RetrievalReport
    cases: list[CaseResult] = field(default_factory=list)
    tokens_full_mean: float = 0.0
    tokens_pruned_mean: float = 0.0
    tps: float = 0.0
    rs: float = 0.0
    turns_mean: float = 0.0
    prune_ms_mean: float = 0.0
    errors: int = 0


@dataclass(frozen=True)
class JudgePrompt:
    text: str
    rating_tag: str = "[[rating]]"
