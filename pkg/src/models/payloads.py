"""Pydantic wire models: dataset lines, service requests and the prune response."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.data_models import PrunedSelection


class UtteranceIn(BaseModel):
    speaker: str
    text: str


class TurnLine(BaseModel):
    """One dataset turn: either user/agent text or a two-speaker utterance list."""
    model_config = ConfigDict(extra="ignore")

    index: int = Field(ge=1)
    user: str | None = None
    agent: str | None = None
    utterances: list[UtteranceIn] | None = None

    @model_validator(mode="after")
    def validate_text(self) -> "TurnLine":
        if self.utterances is not None:
            if not self.utterances or len(self.utterances) > 2:
                raise ValueError("utterances must hold one or two entries")
            self.user = self.utterances[0].text
            self.agent = self.utterances[1].text if len(self.utterances) > 1 else ""
        if self.user is None or self.agent is None:
            raise ValueError("turn needs 'user' and 'agent' (or 'utterances')")
        return self


class TestLine(BaseModel):
    __test__ = False

    query: str
    gold_answer: str = ""
    gold_turns: list[int] = Field(default_factory=list)
    asked_after_turn: int | None = Field(default=None, ge=0)


class DialogueLine(BaseModel):
    model_config = ConfigDict(extra="ignore")

    dialogue_id: str = Field(min_length=1)
    turns: list[TurnLine] = Field(default_factory=list)
    tests: list[TestLine] = Field(default_factory=list)


class TurnIn(BaseModel):
    index: int | None = Field(default=None, ge=1)
    user: str
    agent: str


class PruneIn(BaseModel):
    query: str
    tau: float | None = None
    theta: float | None = None


class SpanOut(BaseModel):
    start: int
    end: int
    gain: float


class PruneResponse(BaseModel):
    """Shared by the CLI ``--format json`` output and the service."""
    spans: list[SpanOut]
    turns: list[int]
    rs: int
    tps: float
    tokens_full: int
    tokens_pruned: int
    context: str


class DialogueInfo(BaseModel):
    dialogue_id: str
    turns: int
    dim: int | None = None


def selection_payload(selection: PrunedSelection) -> PruneResponse:
    return PruneResponse(
        spans=[SpanOut(start=s.start, end=s.end, gain=s.gain) for s in selection.spans],
        turns=list(selection.turn_indices),
        rs=selection.stats.retrieved_segments,
        tps=selection.stats.turns_per_segment,
        tokens_full=selection.token_full,
        tokens_pruned=selection.token_pruned,
        context=selection.rendered_context,
    )
