"""Context selection: DyCP pruning, the fixed baselines and the Bottom-m ablation.

Every method returns a ``PrunedSelection`` whose turns are in chronological
order. Rendering puts each turn as a "User: ...\\nAgent: ..." block, blocks
separated by a blank line, with a line holding only ``ELISION`` between
turns that are not adjacent in the original dialogue.
"""

from __future__ import annotations

import math
from typing import Optional, Protocol, Sequence

from src.analysis.kadane import gains_from, kadane_dial, zscore_normalize
from src.analysis.scoring import embed_query, score_history
from src.collectors.embedders import EmbeddingProvider
from src.config import PruneConfig
from src.models.data_models import (
    MethodSpec,
    PrunedSelection,
    ScoreSequence,
    SegmentStats,
    Span,
    SpanSet,
    TurnRecord,
)

ELISION = "…"
BLOCK_SEP = "\n\n"


class TokenEstimator(Protocol):
    def count(self, text: str) -> int: ...


class HeuristicEstimator:
    """ceil(chars / 4). Ratio-level accounting, not a model tokenizer."""

    chars_per_token = 4

    def count(self, text: str) -> int:
        return math.ceil(len(text) / self.chars_per_token)


class TiktokenEstimator:
    def __init__(self, encoding: str = "cl100k_base"):
        try:
            import tiktoken
        except ImportError as exc:
            raise RuntimeError(f"tiktoken is not installed: {exc}") from exc
        self._encoder = tiktoken.get_encoding(encoding)

    def count(self, text: str) -> int:
        return len(self._encoder.encode(text))


DEFAULT_ESTIMATOR = HeuristicEstimator()


def estimate_tokens(text: str, estimator: TokenEstimator | None = None) -> int:
    return (estimator or DEFAULT_ESTIMATOR).count(text)


def render_context(turns: Sequence[TurnRecord]) -> str:
    """Render chronologically ordered turns, marking gaps between them."""
    parts: list[str] = []
    prev: int | None = None
    for turn in turns:
        if prev is not None:
            parts.append(BLOCK_SEP + ELISION + BLOCK_SEP if turn.index != prev + 1 else BLOCK_SEP)
        parts.append(turn.encoded_unit)
        prev = turn.index
    return "".join(parts)


def consecutive_runs(indices: Sequence[int]) -> list[tuple[int, int]]:
    """Maximal runs of consecutive values in a sorted index list."""
    runs: list[tuple[int, int]] = []
    for i in indices:
        if runs and i == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], i)
        else:
            runs.append((i, i))
    return runs


def _run_spans(indices: Sequence[int], seq: ScoreSequence) -> tuple[Span, ...]:
    return tuple(
        Span(s, e, sum(seq.gains[i - 1] for i in range(s, e + 1)))
        for s, e in consecutive_runs(indices)
    )


def score_ranking(raw: Sequence[float]) -> list[int]:
    """Turn indices by score descending, earlier index first on ties."""
    return sorted(range(1, len(raw) + 1), key=lambda i: (-raw[i - 1], i))


def _assemble(
    method: str,
    turns: Sequence[TurnRecord],
    spans: Sequence[Span],
    segment_lengths: list[int],
    indices: Sequence[int],
    ranking: Sequence[int],
    seq: ScoreSequence | None,
    estimator: TokenEstimator | None,
    token_full: int | None = None,
) -> PrunedSelection:
    selected = tuple(turns[i - 1] for i in indices)
    context = render_context(selected)
    if token_full is None:
        token_full = estimate_tokens(render_context(turns), estimator)
    return PrunedSelection(
        method=method,
        spans=SpanSet(tuple(spans)),
        turn_indices=tuple(indices),
        rendered_context=context,
        stats=SegmentStats.from_lengths(segment_lengths),
        token_full=token_full,
        token_pruned=estimate_tokens(context, estimator) if selected else 0,
        ranking=tuple(ranking),
        scores=seq,
        selected_turns=selected,
    )


def _empty(method: str, turns: Sequence[TurnRecord] = (), estimator: TokenEstimator | None = None) -> PrunedSelection:
    return _assemble(method, turns, (), [], (), (), None, estimator)


def dycp_ranking(spans: Sequence[Span], raw: Sequence[float]) -> list[int]:
    """Spans in extraction order, turns within a span by score descending."""
    ranking: list[int] = []
    for span in spans:
        ranking.extend(sorted(span.turns(), key=lambda i: (-raw[i - 1], i)))
    return ranking


def prune_scores(
    turns: Sequence[TurnRecord],
    raw: Sequence[float],
    config: PruneConfig | None = None,
    estimator: TokenEstimator | None = None,
) -> PrunedSelection:
    """KadaneDial over precomputed scores, then chronological assembly."""
    cfg = config or PruneConfig()
    if not turns:
        return _empty("dycp", turns, estimator)
    spans = kadane_dial(raw, cfg)
    seq = gains_from(zscore_normalize(raw), cfg.tau)
    return _assemble(
        "dycp",
        turns,
        spans.spans,
        [s.length for s in spans],
        spans.turn_indices,
        dycp_ranking(spans.spans, seq.raw),
        seq,
        estimator,
    )


def prune(
    history,
    query_text: str,
    provider: EmbeddingProvider,
    config: PruneConfig | None = None,
    estimator: TokenEstimator | None = None,
    cosine: bool = False,
) -> PrunedSelection:
    """Embed the query, score the history, run KadaneDial and assemble the pruned context."""
    view = history.snapshot()
    if len(view) == 0:
        return _empty("dycp")
    raw = score_history(view, embed_query(provider, query_text), cosine=cosine)
    return prune_scores(view.turns, raw, config, estimator)


def _topk(turns: Sequence[TurnRecord], raw: Sequence[float], k: int, cfg: PruneConfig, estimator) -> PrunedSelection:
    seq = gains_from(zscore_normalize(raw), cfg.tau)
    ranking = score_ranking(seq.raw)
    chosen = sorted(ranking[:k])
    spans = _run_spans(chosen, seq)
    return _assemble(f"topk:{k}", turns, spans, [s.length for s in spans], chosen, ranking[:k], seq, estimator)


def _full(turns: Sequence[TurnRecord], raw: Sequence[float], cfg: PruneConfig, estimator) -> PrunedSelection:
    seq = gains_from(zscore_normalize(raw), cfg.tau)
    indices = list(range(1, len(turns) + 1))
    spans = _run_spans(indices, seq)
    context_tokens = estimate_tokens(render_context(turns), estimator)
    return _assemble(
        "full", turns, spans, [s.length for s in spans], indices,
        score_ranking(seq.raw), seq, estimator, token_full=context_tokens,
    )


def select_baseline(
    history,
    query_text: str,
    provider: EmbeddingProvider,
    method: MethodSpec,
    estimator: TokenEstimator | None = None,
    cosine: bool = False,
) -> PrunedSelection:
    """Full context, no context, or the fixed top-k turns reordered chronologically."""
    view = history.snapshot()
    if method.kind == "none":
        return _empty("none", view.turns, estimator)
    if method.kind not in ("full", "topk"):
        raise ValueError(f"'{method.label}' is not a baseline")
    if method.kind == "topk" and method.k is None:
        raise ValueError("topk:auto must be resolved to a concrete k before selection")
    if len(view) == 0:
        return _empty(method.label)
    raw = score_history(view, embed_query(provider, query_text), cosine=cosine)
    return baseline_scores(view.turns, raw, method, estimator)


def baseline_scores(
    turns: Sequence[TurnRecord],
    raw: Sequence[float],
    method: MethodSpec,
    estimator: TokenEstimator | None = None,
) -> PrunedSelection:
    if method.kind == "none":
        return _empty("none", turns, estimator)
    if not turns:
        return _empty(method.label)
    if method.kind == "full":
        return _full(turns, raw, method.config, estimator)
    return _topk(turns, raw, min(method.k or 1, len(turns)), method.config, estimator)


def ablate_bottom(
    selection: PrunedSelection,
    scores: Sequence[float],
    m: int,
    estimator: TokenEstimator | None = None,
) -> PrunedSelection:
    """Drop the m lowest-scoring turns inside each span.

    Ties drop the later turn first. A span that would be emptied keeps only its
    highest-scoring turn (earlier turn on ties).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    kept: set[int] = set()
    for span in selection.spans:
        members = list(span.turns())
        if len(members) > m:
            by_score = sorted(members, key=lambda i: (scores[i - 1], -i))
            kept.update(by_score[m:])
        else:
            kept.add(max(members, key=lambda i: (scores[i - 1], -i)))

    indices = sorted(kept)
    by_index = {t.index: t for t in selection.selected_turns}
    turns = tuple(by_index[i] for i in indices)
    seq = selection.scores
    if seq is not None and seq.gains:
        spans = _run_spans(indices, seq)
    else:
        spans = tuple(Span(s, e, 0.0) for s, e in consecutive_runs(indices))
    context = render_context(turns)
    return PrunedSelection(
        method=f"bottom:{m}",
        spans=SpanSet(spans),
        turn_indices=tuple(indices),
        rendered_context=context,
        stats=SegmentStats.from_lengths([s.length for s in spans]),
        token_full=selection.token_full,
        token_pruned=estimate_tokens(context, estimator) if turns else 0,
        ranking=tuple(i for i in selection.ranking if i in kept),
        scores=seq,
        selected_turns=turns,
    )


def select_scores(
    turns: Sequence[TurnRecord],
    raw: Sequence[float],
    method: MethodSpec,
    estimator: TokenEstimator | None = None,
) -> PrunedSelection:
    """Dispatch any method over precomputed scores."""
    if method.kind == "dycp":
        return prune_scores(turns, raw, method.config, estimator)
    if method.kind == "bottom":
        base = prune_scores(turns, raw, method.config, estimator)
        return ablate_bottom(base, raw, method.bottom or 1, estimator)
    return baseline_scores(turns, raw, method, estimator)


def select(
    history,
    query_text: str,
    provider: EmbeddingProvider,
    method: MethodSpec,
    estimator: TokenEstimator | None = None,
    cosine: bool = False,
) -> PrunedSelection:
    view = history.snapshot()
    if method.kind == "none":
        return _empty("none", view.turns, estimator)
    if method.kind == "topk" and method.k is None:
        raise ValueError("topk:auto must be resolved to a concrete k before selection")
    if len(view) == 0:
        return _empty(method.label)
    raw = score_history(view, embed_query(provider, query_text), cosine=cosine)
    return select_scores(view.turns, raw, method, estimator)
