"""FastAPI sidecar for live chat backends.

Dialogues live in memory. Turns are appended one at a time (writes to a single
dialogue are serialized) and prune requests read a snapshot, so they run
concurrently with appends. When a snapshot directory is configured every
dialogue is written to the binary cache on shutdown.
"""

from __future__ import annotations

import logging
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse

from src.analysis.pruner import prune
from src.collectors.embedders import EmbeddingProvider, make_provider
from src.config import PruneConfig, Settings, load_settings
from src.errors import DycpError, ProviderContractError, ProviderTransportError, UnknownDialogueError
from src.models.payloads import DialogueInfo, PruneIn, PruneResponse, TurnIn, selection_payload
from src.store.cache import cache_path, save_cache
from src.store.history import DialogueHistory, append_turn

logger = logging.getLogger(__name__)

RETRY_AFTER_S = "1"


@dataclass
class ServiceState:
    provider: EmbeddingProvider
    defaults: PruneConfig = field(default_factory=PruneConfig)
    cosine: bool = False
    snapshot_dir: Optional[Path] = None
    dialogues: dict[str, DialogueHistory] = field(default_factory=dict)
    _pending: dict[str, DialogueHistory] = field(default_factory=dict)
    _locks: dict[str, threading.Lock] = field(default_factory=dict)
    _registry: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def from_settings(cls, settings: Settings) -> "ServiceState":
        return cls(
            provider=make_provider(settings.embedder.spec, settings.embedder),
            defaults=settings.prune,
            cosine=settings.embedder.cosine,
            snapshot_dir=settings.service.snapshot_dir,
        )

    def get(self, dialogue_id: str) -> DialogueHistory:
        with self._registry:
            history = self.dialogues.get(dialogue_id)
        if history is None:
            raise UnknownDialogueError("unknown_dialogue", f"Dialogue '{dialogue_id}' not found")
        return history

    def _writer(self, dialogue_id: str) -> tuple[DialogueHistory, threading.Lock]:
        # a dialogue stays pending, and invisible to readers, until its first turn lands
        with self._registry:
            history = self.dialogues.get(dialogue_id)
            if history is None:
                history = self._pending.get(dialogue_id)
            if history is None:
                history = self._pending[dialogue_id] = DialogueHistory(dialogue_id)
                self._locks[dialogue_id] = threading.Lock()
            return history, self._locks[dialogue_id]

    def append(self, dialogue_id: str, turn: TurnIn) -> int:
        history, lock = self._writer(dialogue_id)
        with lock:
            append_turn(history, turn.user, turn.agent, self.provider, expected_index=turn.index)
            with self._registry:
                if self._pending.pop(dialogue_id, None) is not None:
                    self.dialogues[dialogue_id] = history
            return len(history)

    def config_for(self, request: PruneIn) -> PruneConfig:
        try:
            return PruneConfig(
                self.defaults.tau if request.tau is None else request.tau,
                self.defaults.theta if request.theta is None else request.theta,
                self.defaults.max_spans,
            )
        except ValueError as exc:
            raise DycpError("bad_prune_config", str(exc)) from exc

    def snapshot_all(self) -> list[Path]:
        if self.snapshot_dir is None:
            return []
        with self._registry:
            items = list(self.dialogues.items())
        paths = [save_cache(history, cache_path(self.snapshot_dir, dialogue_id)) for dialogue_id, history in items]
        logger.info("snapshotted %d dialogues to %s", len(paths), self.snapshot_dir)
        return paths


def create_app(state: ServiceState | None = None) -> FastAPI:
    state = state or ServiceState.from_settings(load_settings())

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        state.snapshot_all()

    app = FastAPI(title="Dialogue Context Pruner", lifespan=lifespan)
    app.state.service = state

    @app.exception_handler(DycpError)
    async def dycp_exception_handler(_: Request, exc: DycpError):
        headers = {}
        if isinstance(exc, (ProviderTransportError, ProviderContractError)):
            headers["Retry-After"] = RETRY_AFTER_S
        return JSONResponse(
            status_code=exc.http_status,
            content={"error": exc.code, "detail": exc.detail},
            headers=headers,
        )

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(_: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"error": "validation_error", "detail": jsonable_encoder(exc.errors())},
        )

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    @app.get("/dialogues/{dialogue_id}", response_model=DialogueInfo)
    def dialogue_info(dialogue_id: str) -> DialogueInfo:
        history = state.get(dialogue_id)
        return DialogueInfo(dialogue_id=dialogue_id, turns=len(history), dim=history.dim)

    @app.post("/dialogues/{dialogue_id}/turns", status_code=204)
    def add_turn(dialogue_id: str, turn: TurnIn) -> Response:
        count = state.append(dialogue_id, turn)
        logger.debug("dialogue %s now has %d turns", dialogue_id, count)
        return Response(status_code=204)

    @app.post("/dialogues/{dialogue_id}/prune", response_model=PruneResponse)
    def prune_dialogue(dialogue_id: str, request: PruneIn) -> PruneResponse:
        history = state.get(dialogue_id)
        selection = prune(history, request.query, state.provider, state.config_for(request), cosine=state.cosine)
        return selection_payload(selection)

    return app

