"""Embedding providers: the bi-encoder B(.) behind turns and queries.

Two implementations share the ``EmbeddingProvider`` protocol:

- ``TestEmbedder``: deterministic signed feature hashing (FNV-1a 64 over
  whitespace tokens), L2-normalized. No network, identical on every platform.
- ``HttpEmbedder``: POSTs ``{"model", "texts"}`` to an embedding server and
  expects ``{"dim", "embeddings"}`` back. Transport failures are retried.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Protocol, Sequence, runtime_checkable
from urllib.parse import urlparse

import numpy as np
import requests

from src.config import EmbedderConfig
from src.errors import DycpError, ProviderContractError, ProviderTransportError

logger = logging.getLogger(__name__)

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str

    @property
    def dim(self) -> int | None: ...

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def test_embed(texts: Sequence[str], dim: int) -> np.ndarray:
    """Signed hashing embedder: one +-1 per whitespace token, then L2 norm."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    out = np.zeros((len(texts), dim), dtype=np.float64)
    for row, text in enumerate(texts):
        for token in text.split():
            h = fnv1a_64(token.encode("utf-8"))
            out[row, h % dim] += -1.0 if h >> 63 else 1.0
        norm = float(np.linalg.norm(out[row]))
        if norm > 0.0:
            out[row] /= norm
    return out


test_embed.__test__ = False  # type: ignore[attr-defined]


def validate_batch(vectors: object, expected_count: int, expected_dim: int | None) -> np.ndarray:
    """Provider contract: right count, uniform dim, finite components."""
    try:
        arr = np.asarray(vectors, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProviderContractError("provider_ragged", f"Embeddings are not a uniform matrix: {exc}") from exc
    if expected_count == 0 and arr.size == 0:
        return np.zeros((0, expected_dim or 0), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != expected_count:
        raise ProviderContractError(
            "provider_count_mismatch",
            f"Expected {expected_count} vectors, got shape {arr.shape}",
        )
    if expected_dim is not None and arr.shape[1] != expected_dim:
        raise ProviderContractError(
            "provider_dim_mismatch",
            f"Expected dim {expected_dim}, got {arr.shape[1]}",
        )
    if not np.isfinite(arr).all():
        raise ProviderContractError("provider_non_finite", "Embedding batch contains non-finite values")
    return arr


class TestEmbedder:
    __test__ = False

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.name = f"test:{dim}"
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return test_embed(list(texts), self._dim)


class HttpEmbedder:
    """Remote embedder. Safe to share across threads (one session per thread)."""

    def __init__(self, endpoint: str, model: str, config: EmbedderConfig | None = None):
        self.config = config or EmbedderConfig()
        parsed = urlparse(endpoint)
        if parsed.path in ("", "/"):
            endpoint = endpoint.rstrip("/") + self.config.embed_path
        self.endpoint = endpoint
        self.model = model
        self.name = f"http:{endpoint}:{model}"
        self._dim: int | None = None
        self._local = threading.local()

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            session.headers.update({"Content-Type": "application/json; charset=utf-8"})
            self._local.session = session
        return session

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self._dim or 0), dtype=np.float64)
        size = max(self.config.batch_size, 1)
        parts = [self._embed_batch(texts[i:i + size]) for i in range(0, len(texts), size)]
        return np.vstack(parts)

    def _embed_batch(self, texts: list[str]) -> np.ndarray:
        payload = self._post_with_retries({"model": self.model, "texts": texts})
        if not isinstance(payload, dict) or "embeddings" not in payload or "dim" not in payload:
            raise ProviderContractError("provider_bad_body", "Response must contain 'dim' and 'embeddings'")
        declared = payload["dim"]
        if not isinstance(declared, int) or declared < 1:
            raise ProviderContractError("provider_bad_dim", f"Declared dim {declared!r} is not a positive integer")
        if self._dim is not None and declared != self._dim:
            raise ProviderContractError(
                "provider_dim_mismatch",
                f"Provider switched dim from {self._dim} to {declared}",
            )
        arr = validate_batch(payload["embeddings"], len(texts), declared)
        self._dim = declared
        return arr

    def _post_with_retries(self, body: dict) -> object:
        retries = max(self.config.retries, 1)
        last_error: Exception | None = None

        for attempt in range(1, retries + 1):
            try:
                resp = self.session.post(self.endpoint, json=body, timeout=self.config.timeout_s)
                if resp.status_code >= 500:
                    last_error = DycpError("provider_http_5xx", f"HTTP {resp.status_code} from {self.endpoint}")
                elif resp.status_code >= 400:
                    raise ProviderContractError(
                        "provider_rejected",
                        f"HTTP {resp.status_code} from {self.endpoint}: {resp.text[:200]}",
                    )
                else:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise ProviderContractError("provider_bad_json", f"Response is not JSON: {exc}") from exc
            except requests.RequestException as exc:
                last_error = exc

            logger.warning("embed attempt %d/%d failed: %s", attempt, retries, last_error)
            if attempt < retries:
                time.sleep(self.config.backoff_s * (2 ** (attempt - 1)))

        raise ProviderTransportError(
            "provider_unreachable",
            f"Embedding endpoint {self.endpoint} failed after {retries} attempts: {last_error}",
        )


def http_embed(endpoint: str, model: str, texts: Sequence[str], config: EmbedderConfig | None = None) -> np.ndarray:
    return HttpEmbedder(endpoint, model, config).embed(texts)


def parse_embedder_spec(spec: str) -> tuple[str, str | None, str | None]:
    """Split ``test:<dim>`` or ``http:<url>[:model]`` into (kind, arg, model)."""
    kind, _, rest = spec.strip().partition(":")
    if kind == "test":
        return "test", rest or "256", None
    if kind == "http":
        if not rest:
            raise DycpError("embedder_spec", "http embedder needs a URL: http:<url>[:model]")
        left, sep, right = rest.rpartition(":")
        # a trailing ":model" is anything that is not a port or the scheme separator
        if sep and "://" in left and right and not right[0].isdigit() and not right.startswith("//"):
            return "http", left, right
        return "http", rest, None
    raise DycpError("embedder_spec", f"Unknown embedder spec '{spec}' (use test:<dim> or http:<url>[:model])")


def make_provider(spec: str, config: EmbedderConfig | None = None) -> EmbeddingProvider:
    cfg = config or EmbedderConfig()
    kind, arg, model = parse_embedder_spec(spec)
    if kind == "test":
        try:
            return TestEmbedder(int(arg))
        except ValueError as exc:
            raise DycpError("embedder_spec", f"Bad test embedder dim '{arg}'") from exc
    return HttpEmbedder(arg, model or cfg.model, cfg)
