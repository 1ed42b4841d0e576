"""Optional OpenAI-compatible chat client used for answers and judging.

Answers are requested in streaming mode so first-token latency can be measured
from the moment the request is sent.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from typing import Optional

import requests

from src.analysis.judge import build_judge_prompt, parse_rating
from src.config import LLMConfig
from src.errors import ProviderContractError, ProviderTransportError, RatingParseError

logger = logging.getLogger(__name__)

ANSWER_SYSTEM = "Answer the user's question using the conversation history when it is relevant."


@dataclass
class ChatResult:
    text: str
    first_token_ms: Optional[float]
    total_ms: float


def build_messages(context: str, question: str) -> list[dict[str, str]]:
    messages = [{"role": "system", "content": ANSWER_SYSTEM}]
    if context:
        messages.append({"role": "system", "content": f"Conversation history:\n{context}"})
    messages.append({"role": "user", "content": question})
    return messages


class ChatClient:
    def __init__(self, config: LLMConfig):
        if not config.endpoint:
            raise ValueError("LLM endpoint is not configured")
        self.config = config
        self.session = requests.Session()
        self.session.headers.update({"Content-Type": "application/json"})
        if config.api_key:
            self.session.headers["Authorization"] = f"Bearer {config.api_key}"

    def chat(self, messages: list[dict[str, str]], model: str | None = None) -> ChatResult:
        body = {"model": model or self.config.model, "messages": messages, "stream": True}
        started = time.perf_counter()
        first_token_ms: float | None = None
        parts: list[str] = []
        try:
            with self.session.post(self.config.endpoint, json=body, stream=True, timeout=self.config.timeout_s) as resp:
                if resp.status_code >= 400:
                    raise ProviderContractError("llm_rejected", f"HTTP {resp.status_code} from {self.config.endpoint}")
                for raw in resp.iter_lines(decode_unicode=True):
                    if not raw or not raw.startswith("data:"):
                        continue
                    data = raw[len("data:"):].strip()
                    if data == "[DONE]":
                        break
                    try:
                        chunk = json.loads(data)
                    except json.JSONDecodeError:
                        logger.debug("skipping malformed stream chunk: %r", data[:80])
                        continue
                    for choice in chunk.get("choices") or []:
                        piece = (choice.get("delta") or {}).get("content")
                        if piece:
                            if first_token_ms is None:
                                first_token_ms = (time.perf_counter() - started) * 1000.0
                            parts.append(piece)
        except requests.RequestException as exc:
            raise ProviderTransportError("llm_unreachable", f"LLM endpoint {self.config.endpoint}: {exc}") from exc
        return ChatResult("".join(parts), first_token_ms, (time.perf_counter() - started) * 1000.0)

    def answer(self, context: str, question: str) -> ChatResult:
        return self.chat(build_messages(context, question))

    def judge(self, history_text: str, question: str, gold: str, response: str) -> int | None:
        """Judge rating, or None when the judge output has no parsable rating."""
        prompt = build_judge_prompt(history_text, question, gold, response)
        result = self.chat([{"role": "user", "content": prompt.text}], model=self.config.judge_model)
        try:
            return parse_rating(result.text)
        except RatingParseError as exc:
            logger.warning("judge output not rated: %s", exc)
            return None
