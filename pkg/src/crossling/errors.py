"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class CrosslingError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CrosslingError):
    """Invalid or incomplete configuration."""


class GatewayError(CrosslingError):
    """Base class for model-gateway failures."""


class TransientFailure(GatewayError):
    """Retryable backend failure that persisted past the retry budget."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class PermanentFailure(GatewayError):
    """Non-retryable backend failure (e.g. HTTP 4xx other than 429)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProtocolError(GatewayError):
    """Backend answered, but the response body violates the wire contract."""


class SynthesisError(CrosslingError):
    """Item-level failure while generating or refining a pair."""

    def __init__(self, item_id: str, message: str):
        super().__init__(f"{item_id}: {message}")
        self.item_id = item_id


class TranslationError(CrosslingError):
    """Item-level failure while translating a response."""

    def __init__(self, item_id: str, message: str):
        super().__init__(f"{item_id}: {message}")
        self.item_id = item_id


class VerdictError(CrosslingError):
    """The judge completion could not be mapped to a verdict or score."""

    def __init__(self, item_id: str, message: str):
        super().__init__(f"{item_id}: {message}")
        self.item_id = item_id


class FatalPipelineError(CrosslingError):
    """Unrecoverable pipeline condition (missing artifact, digest mismatch, held lock)."""
