"""JSONL dialogue dataset reader and writer.

One dialogue object per line::

    {"dialogue_id": str,
     "turns": [{"index": int, "user": str, "agent": str}, ...],
     "tests": [{"query": str, "gold_answer": str, "gold_turns": [int],
                "asked_after_turn": int?}, ...]}

A turn may carry ``"utterances": [{"speaker", "text"}, ...]`` instead of
user/agent; the first utterance fills the user slot and the second the agent slot.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

from pydantic import ValidationError

from src.errors import DatasetValidationError
from src.models.data_models import DialogueSource, TestCase, TurnRecord
from src.models.payloads import DialogueLine

logger = logging.getLogger(__name__)

Dataset = list[tuple[DialogueSource, list[TestCase]]]


def _field_path(loc: Sequence[object]) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<line>"


def parse_dialogue_line(raw: str, line_no: int = 1) -> tuple[DialogueSource, list[TestCase]]:
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetValidationError("dataset_bad_json", f"line {line_no}: invalid JSON ({exc.msg})") from exc
    try:
        line = DialogueLine.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise DatasetValidationError(
            "dataset_invalid",
            f"line {line_no}: field '{_field_path(first['loc'])}': {first['msg']}",
        ) from exc

    turns: list[TurnRecord] = []
    for position, turn in enumerate(line.turns, start=1):
        if turn.index != position:
            raise DatasetValidationError(
                "dataset_turn_order",
                f"line {line_no}: field 'turns[{position - 1}].index': expected {position}, got {turn.index}",
            )
        turns.append(TurnRecord.create(turn.index, turn.user or "", turn.agent or ""))

    cases: list[TestCase] = []
    for t, test in enumerate(line.tests):
        asked_after = len(turns) if test.asked_after_turn is None else test.asked_after_turn
        if asked_after > len(turns):
            raise DatasetValidationError(
                "dataset_asked_after",
                f"line {line_no}: field 'tests[{t}].asked_after_turn': {asked_after} exceeds {len(turns)} turns",
            )
        bad = [g for g in test.gold_turns if not 1 <= g <= asked_after]
        if bad:
            raise DatasetValidationError(
                "dataset_gold_range",
                f"line {line_no}: field 'tests[{t}].gold_turns': {bad} outside 1..{asked_after}",
            )
        cases.append(TestCase(test.query, test.gold_answer, frozenset(test.gold_turns), asked_after))

    return DialogueSource(line.dialogue_id, tuple(turns)), cases


def load_dialogues(path: Path) -> Dataset:
    """Read and validate every dialogue in a JSONL file. Blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise DatasetValidationError("dataset_missing", f"Dataset file {path} does not exist")

    dataset: Dataset = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            source, cases = parse_dialogue_line(raw, line_no)
            if source.dialogue_id in seen:
                raise DatasetValidationError(
                    "dataset_duplicate_id",
                    f"line {line_no}: field 'dialogue_id': '{source.dialogue_id}' appears twice",
                )
            seen.add(source.dialogue_id)
            dataset.append((source, cases))

    logger.info("loaded %d dialogues from %s", len(dataset), path)
    return dataset


def dialogue_to_dict(source: DialogueSource, cases: Iterable[TestCase]) -> dict:
    return {
        "dialogue_id": source.dialogue_id,
        "turns": [{"index": t.index, "user": t.user_text, "agent": t.agent_text} for t in source.turns],
        "tests": [
            {
                "query": c.query,
                "gold_answer": c.gold_answer,
                "gold_turns": sorted(c.gold_turns),
                "asked_after_turn": c.asked_after_turn,
            }
            for c in cases
        ],
    }


def write_dataset(path: Path, dataset: Dataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for source, cases in dataset:
            fh.write(json.dumps(dialogue_to_dict(source, cases), ensure_ascii=False) + "\n")
    return path
