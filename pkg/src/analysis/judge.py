"""Answer-quality plumbing: the LLM judge prompt, its rating parser and exact match."""

from __future__ import annotations

import re

from src.errors import RatingParseError
from src.models.data_models import JudgePrompt

JUDGE_PREAMBLE = (
    "You are an impartial judge. You will be shown Conversation History, "
    "User Question, Gold Response and Model Response."
)

JUDGE_INSTRUCTION = (
    "Please evaluate whether the Model Response accurately answers the User Question, "
    "referencing the proper information from the Conversation History, and using the "
    "Gold Response as a reference. Begin your evaluation by providing a short explanation, "
    "then you must rate Model Response on an integer rating of 1 to 100 by strictly "
    "following this format: [[rating]]."
)

_RATING_PATTERNS = (
    re.compile(r"\[\[\s*rating\s*\]\]\s*[:=]?\s*(\d{1,3})\b", re.IGNORECASE),
    re.compile(r"\[\[\s*(\d{1,3})\s*\]\]"),
)


def build_judge_prompt(history_text: str, question: str, gold: str, response: str) -> JudgePrompt:
    text = (
        f"{JUDGE_PREAMBLE}\n\n"
        f"Conversation History:\n{history_text}\n\n"
        f"User Question:\n{question}\n\n"
        f"Gold Response:\n{gold}\n\n"
        f"Model Response:\n{response}\n\n"
        f"{JUDGE_INSTRUCTION}"
    )
    return JudgePrompt(text=text)


def parse_rating(text: str) -> int:
    """Extract the judge's 1..100 rating; the last occurrence wins."""
    found: list[tuple[int, int]] = []
    for pattern in _RATING_PATTERNS:
        found.extend((m.start(), int(m.group(1))) for m in pattern.finditer(text or ""))
    if not found:
        raise RatingParseError("rating_missing", "No [[rating]] found in judge output")
    _, value = max(found)
    if not 1 <= value <= 100:
        raise RatingParseError("rating_out_of_range", f"Rating {value} is outside 1..100")
    return value


def exact_match(response: str, gold: str) -> bool:
    """True when the response contains the gold string, ignoring case."""
    gold = gold.strip().casefold()
    return bool(gold) and gold in response.casefold()
