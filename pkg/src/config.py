"""Global configuration for the dialogue context pruner.

Values resolve in this order (later wins): built-in defaults, JSON config file,
``DYCP_*`` environment variables, CLI flags. The CLI applies its flags on top of
whatever ``load_settings`` returns.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from src.errors import DycpError

BASE_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = BASE_DIR / "data"

ENV_PREFIX = "DYCP_"


def _env_bool(raw: str) -> bool:
    return raw.strip().lower() in {"1", "true", "yes", "on"}


def _int_list(raw: str) -> list[int]:
    return [int(part) for part in raw.replace(" ", "").split(",") if part]


def _optional_int(raw: str) -> int | None:
    raw = raw.strip().lower()
    return None if raw in {"", "none", "unlimited"} else int(raw)


@dataclass
class PruneConfig:
    """KadaneDial inputs.

    tau shifts z-scores into gains; theta is the minimum gain the previously
    extracted span must reach for extraction to continue. ``max_spans=None``
    means no cap up to 10^4 turns and a cap of m beyond that.
    """
    tau: float = 0.6
    theta: float = 1.0
    max_spans: Optional[int] = None

    def __post_init__(self) -> None:
        if self.max_spans is not None and self.max_spans < 1:
            raise ValueError(f"max_spans must be >= 1, got {self.max_spans}")
        if math.isnan(self.tau) or math.isinf(self.tau):
            raise ValueError(f"tau must be finite, got {self.tau}")
        if math.isnan(self.theta):
            raise ValueError("theta must not be NaN")

    def span_cap(self, m: int) -> int | None:
        if self.max_spans is not None:
            return self.max_spans
        return None if m <= 10_000 else m


@dataclass
class EmbedderConfig:
    spec: str = "test:256"
    model: str = "facebook/contriever-msmarco"
    embed_path: str = "/embed"
    timeout_s: float = 30.0
    retries: int = 3
    backoff_s: float = 0.2
    batch_size: int = 64
    cosine: bool = False


@dataclass
class EvalConfig:
    ks: list[int] = field(default_factory=lambda: [1, 3, 5, 10])
    bottoms: list[int] = field(default_factory=lambda: [1, 2, 3])
    timing: bool = True
    workers: int = 1
    out_dir: Path = field(default_factory=lambda: DATA_DIR / "reports")


@dataclass
class LLMConfig:
    """Optional chat endpoint for answer generation and judging. Off when endpoint is None."""
    endpoint: Optional[str] = None
    model: str = "gpt-4o"
    judge_model: Optional[str] = None
    api_key: Optional[str] = None
    timeout_s: float = 120.0


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    snapshot_dir: Optional[Path] = None


@dataclass
class Settings:
    prune: PruneConfig = field(default_factory=PruneConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    cache_dir: Path = field(default_factory=lambda: DATA_DIR / "cache")
    seed: int = 1
    log_level: str = "WARNING"


_SECTIONS = ("prune", "embedder", "eval", "llm", "service")
_PATH_FIELDS = {"out_dir", "snapshot_dir", "cache_dir"}

ENV_FIELDS: dict[str, tuple[str | None, str, Callable[[str], Any]]] = {
    "TAU": ("prune", "tau", float),
    "THETA": ("prune", "theta", float),
    "MAX_SPANS": ("prune", "max_spans", _optional_int),
    "EMBEDDER": ("embedder", "spec", str),
    "EMBED_MODEL": ("embedder", "model", str),
    "EMBED_PATH": ("embedder", "embed_path", str),
    "EMBED_TIMEOUT": ("embedder", "timeout_s", float),
    "EMBED_RETRIES": ("embedder", "retries", int),
    "COSINE": ("embedder", "cosine", _env_bool),
    "KS": ("eval", "ks", _int_list),
    "BOTTOMS": ("eval", "bottoms", _int_list),
    "TIMING": ("eval", "timing", _env_bool),
    "WORKERS": ("eval", "workers", int),
    "OUT": ("eval", "out_dir", Path),
    "LLM_ENDPOINT": ("llm", "endpoint", str),
    "LLM_MODEL": ("llm", "model", str),
    "JUDGE_MODEL": ("llm", "judge_model", str),
    "LLM_API_KEY": ("llm", "api_key", str),
    "HOST": ("service", "host", str),
    "PORT": ("service", "port", int),
    "SNAPSHOT_DIR": ("service", "snapshot_dir", Path),
    "CACHE_DIR": (None, "cache_dir", Path),
    "SEED": (None, "seed", int),
    "LOG_LEVEL": (None, "log_level", str),
}


def _coerce(name: str, value: Any) -> Any:
    if name in _PATH_FIELDS and value is not None:
        return Path(value)
    return value


def _apply_config_payload(settings: Settings, payload: Mapping[str, Any]) -> None:
    for section in _SECTIONS:
        values = payload.get(section) or {}
        target = getattr(settings, section)
        known = {f.name for f in fields(target)}
        for key, val in values.items():
            if key not in known:
                raise DycpError("config_unknown_key", f"Unknown config key '{section}.{key}'")
            setattr(target, key, _coerce(key, val))
    for key in ("cache_dir", "seed", "log_level"):
        if key in payload and payload[key] is not None:
            setattr(settings, key, _coerce(key, payload[key]))


def _apply_env(settings: Settings, env: Mapping[str, str]) -> None:
    for suffix, (section, name, parse) in ENV_FIELDS.items():
        raw = env.get(ENV_PREFIX + suffix)
        if raw is None:
            continue
        try:
            value = parse(raw)
        except ValueError as exc:
            raise DycpError("config_bad_env", f"{ENV_PREFIX}{suffix}={raw!r}: {exc}") from exc
        target = settings if section is None else getattr(settings, section)
        setattr(target, name, value)


def load_settings(
    config_file: Path | None = None,
    env: Mapping[str, str] | None = None,
) -> Settings:
    """Build settings from defaults, then the config file, then the environment."""
    env = os.environ if env is None else env
    settings = Settings()

    path = config_file or (Path(env[ENV_PREFIX + "CONFIG"]) if env.get(ENV_PREFIX + "CONFIG") else None)
    if path is not None:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DycpError("config_unreadable", f"Cannot read config file {path}: {exc}") from exc
        _apply_config_payload(settings, payload)

    _apply_env(settings, env)
    # re-run validation after string overrides
    try:
        settings.prune = PruneConfig(settings.prune.tau, settings.prune.theta, settings.prune.max_spans)
    except ValueError as exc:
        raise DycpError("config_invalid", str(exc)) from exc
    return settings
