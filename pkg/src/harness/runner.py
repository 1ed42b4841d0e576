"""Benchmark runner: every method over every test case, then per-method reduction.

Each case is scored once (query embedding plus inner products against the
visible history prefix) and every method selects from those shared scores.
``topk:auto`` is resolved after DyCP has run on all cases, to the rounded mean
of DyCP's selected turn count.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.analysis.metrics import aggregate, retrieval_metrics
from src.analysis.judge import exact_match
from src.analysis.pruner import TokenEstimator, render_context, select_scores
from src.analysis.scoring import embed_query, score_history
from src.collectors.dataset_loader import Dataset
from src.collectors.embedders import EmbeddingProvider
from src.config import PruneConfig, Settings
from src.errors import DycpError
from src.models.data_models import (
    CaseResult,
    DialogueSource,
    MethodSpec,
    PrunedSelection,
    RetrievalRow,
    RunRecord,
    TestCase,
)
from src.store.cache import attach_cache, cache_path, load_cache
from src.store.history import DialogueHistory, HistoryView, extend_turns

logger = logging.getLogger(__name__)


@dataclass
class PreparedDialogue:
    source: DialogueSource
    history: DialogueHistory
    cases: list[TestCase]


@dataclass
class ScoredCase:
    dialogue: PreparedDialogue
    case_index: int
    case: TestCase
    view: HistoryView
    raw: Optional[list[float]] = None
    score_ms: float = 0.0
    error: Optional[str] = None


def build_histories(
    dataset: Dataset,
    provider: EmbeddingProvider,
    cache_dir: Path | None = None,
) -> list[PreparedDialogue]:
    """Embed every dialogue, reusing a cache file when one exists for it."""
    prepared: list[PreparedDialogue] = []
    for source, cases in dataset:
        path = cache_path(cache_dir, source.dialogue_id) if cache_dir else None
        if path is not None and path.exists():
            history = attach_cache(source, load_cache(path))
            logger.debug("loaded %s from cache %s", source.dialogue_id, path)
        else:
            history = DialogueHistory(source.dialogue_id)
            extend_turns(history, ((t.user_text, t.agent_text) for t in source.turns), provider)
        prepared.append(PreparedDialogue(source, history, list(cases)))
    return prepared


def _score_case(item: ScoredCase, provider: EmbeddingProvider, cosine: bool) -> ScoredCase:
    started = time.perf_counter()
    try:
        if len(item.view):
            item.raw = score_history(item.view, embed_query(provider, item.case.query), cosine=cosine)
        else:
            item.raw = []
    except DycpError as exc:
        logger.warning("case %s#%d failed: %s", item.dialogue.source.dialogue_id, item.case_index, exc)
        item.error = exc.code
    item.score_ms = (time.perf_counter() - started) * 1000.0
    return item


def score_cases(
    prepared: Sequence[PreparedDialogue],
    provider: EmbeddingProvider,
    cosine: bool = False,
    workers: int = 1,
) -> list[ScoredCase]:
    items = [
        ScoredCase(d, i, case, d.history.view(case.asked_after_turn))
        for d in prepared
        for i, case in enumerate(d.cases)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda it: _score_case(it, provider, cosine), items))
    return [_score_case(it, provider, cosine) for it in items]


def resolve_auto_k(dycp_cases: Sequence[CaseResult]) -> int:
    """Half-up rounded mean of DyCP's selected turns, at least 1."""
    totals = [c.turns_total for c in dycp_cases if c.error is None]
    if not totals:
        return 1
    return max(1, math.floor(float(np.mean(totals)) + 0.5))


def _case_result(
    item: ScoredCase,
    method: MethodSpec,
    ks: Sequence[int],
    timing: bool,
    estimator: TokenEstimator | None,
) -> tuple[CaseResult, Optional[PrunedSelection]]:
    source_id = item.dialogue.source.dialogue_id
    if item.error is not None:
        empty = RetrievalRow(gold_size=len(item.case.gold_turns), skipped=True)
        return CaseResult(source_id, item.case_index, item.case.query, (), 0, 0.0, 0, 0, 0, 0.0, empty, error=item.error), None

    started = time.perf_counter()
    selection = select_scores(item.view.turns, item.raw or [], method, estimator)
    elapsed = (time.perf_counter() - started) * 1000.0
    if method.kind != "none":
        elapsed += item.score_ms
    row = retrieval_metrics(selection.ranking, item.case.gold_turns, ks)
    result = CaseResult(
        dialogue_id=source_id,
        case_index=item.case_index,
        query=item.case.query,
        turns=selection.turn_indices,
        rs=selection.stats.retrieved_segments,
        tps=selection.stats.turns_per_segment,
        turns_total=selection.stats.turns_total,
        token_full=selection.token_full,
        token_pruned=selection.token_pruned,
        prune_ms=round(elapsed, 3) if timing else 0.0,
        metrics=row,
    )
    return result, selection


def _answer(result: CaseResult, selection: PrunedSelection, item: ScoredCase, llm) -> None:
    try:
        reply = llm.answer(selection.rendered_context, item.case.query)
        result.first_token_ms = reply.first_token_ms
        result.exact_match = exact_match(reply.text, item.case.gold_answer)
        if llm.config.judge_model:
            history_text = render_context(item.view.turns)
            result.judge_rating = llm.judge(history_text, item.case.query, item.case.gold_answer, reply.text)
    except DycpError as exc:
        logger.warning("answer for %s#%d failed: %s", result.dialogue_id, result.case_index, exc)


def _reduce(method: MethodSpec, cases: list[CaseResult], ks: Sequence[int], params: dict) -> RunRecord:
    ok = [c for c in cases if c.error is None]
    record = RunRecord(
        method=method.label,
        params=params,
        report=aggregate(method.label, [c.metrics for c in ok], ks),
        cases=cases,
        errors=len(cases) - len(ok),
    )
    if ok:
        record.tokens_full_mean = float(np.mean([c.token_full for c in ok]))
        record.tokens_pruned_mean = float(np.mean([c.token_pruned for c in ok]))
        record.tps = float(np.mean([c.tps for c in ok]))
        record.rs = float(np.mean([c.rs for c in ok]))
        record.turns_mean = float(np.mean([c.turns_total for c in ok]))
        record.prune_ms_mean = float(np.mean([c.prune_ms for c in ok]))
    return record


def method_params(method: MethodSpec, provider: EmbeddingProvider, settings: Settings) -> dict:
    params = {
        "tau": method.config.tau,
        "theta": method.config.theta,
        "max_spans": method.config.max_spans,
        "embedder": provider.name,
        "cosine": settings.embedder.cosine,
        "ks": list(settings.eval.ks),
    }
    if method.kind == "topk":
        params["k"] = method.k
    if method.kind == "bottom":
        params["bottom"] = method.bottom
    return params


def run_comparison(
    dataset: Dataset,
    methods: Sequence[MethodSpec],
    provider: EmbeddingProvider,
    settings: Settings | None = None,
    llm=None,
    cache_dir: Path | None = None,
    estimator: TokenEstimator | None = None,
) -> list[RunRecord]:
    """Evaluate ``methods`` on every test case; one RunRecord per method, in input order."""
    settings = settings or Settings()
    ks = list(settings.eval.ks)
    timing = settings.eval.timing

    prepared = build_histories(dataset, provider, cache_dir)
    scored = score_cases(prepared, provider, settings.embedder.cosine, settings.eval.workers)
    logger.info("scored %d cases over %d dialogues", len(scored), len(prepared))

    results: dict[tuple, tuple[list[CaseResult], list[Optional[PrunedSelection]]]] = {}

    def run(method: MethodSpec) -> tuple[list[CaseResult], list[Optional[PrunedSelection]]]:
        key = (method.label, method.config.tau, method.config.theta, method.config.max_spans)
        if key not in results:
            pairs = [_case_result(item, method, ks, timing, estimator) for item in scored]
            results[key] = ([p[0] for p in pairs], [p[1] for p in pairs])
        return results[key]

    auto_k: int | None = None
    records: list[RunRecord] = []
    for method in methods:
        if method.is_auto:
            if auto_k is None:
                auto_k = resolve_auto_k(run(MethodSpec("dycp", config=method.config))[0])
                logger.info("topk:auto resolved to k=%d", auto_k)
            method = replace(method, k=auto_k)
        cases, selections = run(method)
        if llm is not None:
            for result, selection, item in zip(cases, selections, scored):
                if selection is not None:
                    _answer(result, selection, item, llm)
        records.append(_reduce(method, cases, ks, method_params(method, provider, settings)))
    return records


def run_ablation(
    dataset: Dataset,
    provider: EmbeddingProvider,
    settings: Settings | None = None,
    bottoms: Sequence[int] | None = None,
    cache_dir: Path | None = None,
) -> list[RunRecord]:
    """DyCP followed by its Bottom-m variants; the first record is the unablated run."""
    settings = settings or Settings()
    config: PruneConfig = settings.prune
    sweep = list(bottoms if bottoms is not None else settings.eval.bottoms)
    methods = [MethodSpec("dycp", config=config)] + [MethodSpec("bottom", bottom=m, config=config) for m in sweep]
    return run_comparison(dataset, methods, provider, settings, cache_dir=cache_dir)
