"""Error hierarchy shared by the library, the CLI and the service.

Every error carries a short machine ``code`` plus a human message. The CLI maps
``exit_code`` to its process status and the service maps ``http_status`` to the
response status, both with the same ``{"error": code, "detail": message}`` body.
"""

from __future__ import annotations


class DycpError(RuntimeError):
    exit_code: int = 2
    http_status: int = 400

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code

    @property
    def detail(self) -> str:
        return str(self)


class DimensionError(DycpError):
    """Vector length disagrees with the store or the query."""


class NonFiniteError(DycpError):
    """An embedding contains NaN or infinity."""


class CacheFormatError(DycpError):
    """Cache file header is not ours (magic or version)."""


class CacheCorruptionError(DycpError):
    """Cache header is ours but the payload does not match it."""


class DatasetValidationError(DycpError):
    http_status = 422


class UnknownDialogueError(DycpError):
    http_status = 404


class TurnIndexConflictError(DycpError):
    http_status = 409


class RatingParseError(DycpError):
    pass


class ProviderContractError(DycpError):
    """The embedding provider answered, but the answer breaks the contract."""
    exit_code = 3
    http_status = 502


class ProviderTransportError(DycpError):
    """The embedding provider could not be reached. Retryable."""
    exit_code = 3
    http_status = 502
