"""Retrieval accuracy: Hit@k, Recall@k and Precision@k against gold turns."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from src.models.data_models import RetrievalReport, RetrievalRow


def retrieval_metrics(selected: Sequence[int], gold: Iterable[int], ks: Sequence[int]) -> RetrievalRow:
    """Per-case metrics for a ranked selection.

    ``selected`` is in the method's preference order. Precision@k divides by k
    even when fewer than k turns were selected. The overall hit/recall/precision
    use the whole selection. A case with no gold turns is marked skipped.
    """
    gold_set = set(gold)
    row = RetrievalRow(gold_size=len(gold_set), selected_size=len(selected))
    if not gold_set:
        row.skipped = True
        return row

    for k in ks:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        matched = sum(1 for i in selected[:k] if i in gold_set)
        row.hit_at[k] = 1.0 if matched else 0.0
        row.recall_at[k] = matched / len(gold_set)
        row.precision_at[k] = matched / k

    row.matched = sum(1 for i in set(selected) if i in gold_set)
    row.hit = 1.0 if row.matched else 0.0
    row.recall = row.matched / len(gold_set)
    row.precision = row.matched / len(set(selected)) if selected else 0.0
    return row


def aggregate(method: str, rows: Sequence[RetrievalRow], ks: Sequence[int]) -> RetrievalReport:
    """Mean of every metric over the non-skipped rows."""
    scored = [r for r in rows if not r.skipped]
    report = RetrievalReport(method=method, cases=len(scored), skipped=len(rows) - len(scored))
    if not scored:
        report.hit_at = {k: 0.0 for k in ks}
        report.recall_at = {k: 0.0 for k in ks}
        report.precision_at = {k: 0.0 for k in ks}
        return report

    for k in ks:
        report.hit_at[k] = float(np.mean([r.hit_at[k] for r in scored]))
        report.recall_at[k] = float(np.mean([r.recall_at[k] for r in scored]))
        report.precision_at[k] = float(np.mean([r.precision_at[k] for r in scored]))
    report.hit = float(np.mean([r.hit for r in scored]))
    report.recall = float(np.mean([r.recall for r in scored]))
    report.precision = float(np.mean([r.precision for r in scored]))
    return report
