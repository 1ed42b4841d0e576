"""Report emission: one results JSON per method, plus summary and per-case CSVs."""

from __future__ import annotations

import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import pandas as pd

from src.models.data_models import CaseResult, RunRecord

logger = logging.getLogger(__name__)


def make_run_id(dialogue_ids: Sequence[str], records: Sequence[RunRecord], timestamped: bool) -> str:
    """Hash of the dataset ids, methods and parameters; timestamp-prefixed when timing is on."""
    blob = json.dumps(
        {"dialogues": list(dialogue_ids), "methods": [[r.method, r.params] for r in records]},
        sort_keys=True,
        default=str,
    )
    digest = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
    if timestamped:
        return f"{datetime.now(timezone.utc):%Y%m%dT%H%M%SZ}-{digest}"
    return digest


def _by_k(values: dict[int, float]) -> dict[str, float]:
    return {str(k): v for k, v in sorted(values.items())}


def case_row(case: CaseResult) -> dict:
    m = case.metrics
    return {
        "dialogue_id": case.dialogue_id,
        "case": case.case_index,
        "query": case.query,
        "turns": list(case.turns),
        "rs": case.rs,
        "tps": case.tps,
        "turns_total": case.turns_total,
        "tokens_full": case.token_full,
        "tokens_pruned": case.token_pruned,
        "prune_ms": case.prune_ms,
        "hit": m.hit,
        "recall": m.recall,
        "precision": m.precision,
        "hit_at": _by_k(m.hit_at),
        "recall_at": _by_k(m.recall_at),
        "precision_at": _by_k(m.precision_at),
        "gold_size": m.gold_size,
        "skipped": m.skipped,
        "error": case.error,
        "first_token_ms": case.first_token_ms,
        "exact_match": case.exact_match,
        "judge_rating": case.judge_rating,
    }


def record_to_json(record: RunRecord, run_id: str) -> dict:
    report = record.report
    return {
        "run_id": run_id,
        "method": record.method,
        "params": record.params,
        "overall": {
            "hit": report.hit,
            "recall": report.recall,
            "precision": report.precision,
            "hit_at": _by_k(report.hit_at),
            "recall_at": _by_k(report.recall_at),
            "precision_at": _by_k(report.precision_at),
            "tokens_full_mean": record.tokens_full_mean,
            "tokens_pruned_mean": record.tokens_pruned_mean,
            "tps": record.tps,
            "rs": record.rs,
            "turns_mean": record.turns_mean,
            "prune_ms_mean": record.prune_ms_mean,
            "cases": report.cases,
            "skipped": report.skipped,
            "errors": record.errors,
        },
        "cases": [case_row(c) for c in record.cases],
    }


def summary_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        row = {
            "method": r.method,
            "hit": r.report.hit,
            "recall": r.report.recall,
            "precision": r.report.precision,
        }
        for k in sorted(r.report.recall_at):
            row[f"hit@{k}"] = r.report.hit_at[k]
            row[f"recall@{k}"] = r.report.recall_at[k]
            row[f"precision@{k}"] = r.report.precision_at[k]
        row.update({
            "tokens_full_mean": r.tokens_full_mean,
            "tokens_pruned_mean": r.tokens_pruned_mean,
            "tps": r.tps,
            "rs": r.rs,
            "turns_mean": r.turns_mean,
            "prune_ms_mean": r.prune_ms_mean,
            "cases": r.report.cases,
            "skipped": r.report.skipped,
            "errors": r.errors,
        })
        rows.append(row)
    return pd.DataFrame(rows)


def cases_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        for c in r.cases:
            row = case_row(c)
            row["turns"] = " ".join(str(i) for i in c.turns)
            for name in ("hit_at", "recall_at", "precision_at"):
                for k, v in row.pop(name).items():
                    row[f"{name[:-3]}@{k}"] = v
            rows.append({"method": r.method, **row})
    return pd.DataFrame(rows)


def ablation_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    """Each record against the first one (the unablated DyCP run)."""
    if not records:
        return pd.DataFrame()
    base = records[0]
    rows = []
    for r in records:
        rows.append({
            "method": r.method,
            "recall": r.report.recall,
            "precision": r.report.precision,
            "hit": r.report.hit,
            "turns_mean": r.turns_mean,
            "tokens_pruned_mean": r.tokens_pruned_mean,
            "delta_recall": r.report.recall - base.report.recall,
            "delta_precision": r.report.precision - base.report.precision,
            "delta_turns": r.turns_mean - base.turns_mean,
            "delta_tokens": r.tokens_pruned_mean - base.tokens_pruned_mean,
        })
    return pd.DataFrame(rows)


def method_slug(method: str) -> str:
    return method.replace(":", "-")


def write_reports(
    records: Sequence[RunRecord],
    out_dir: Path,
    run_id: str,
    ablation: bool = False,
) -> list[Path]:
    """Write ``<run_id>_<method>.json`` per method and ``<run_id>_summary.csv``/``_cases.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for record in records:
        path = out_dir / f"{run_id}_{method_slug(record.method)}.json"
        path.write_text(json.dumps(record_to_json(record, run_id), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        written.append(path)

    summary = out_dir / f"{run_id}_summary.csv"
    summary_frame(records).to_csv(summary, index=False, lineterminator="\n")
    cases = out_dir / f"{run_id}_cases.csv"
    cases_frame(records).to_csv(cases, index=False, lineterminator="\n")
    written += [summary, cases]
    if ablation:
        path = out_dir / f"{run_id}_ablation.csv"
        ablation_frame(records).to_csv(path, index=False, lineterminator="\n")
        written.append(path)
    logger.info("wrote %d report files to %s", len(written), out_dir)
    return written
