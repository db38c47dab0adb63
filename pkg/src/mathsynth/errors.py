"""Exception types shared across the pipeline.

Every error carries a stable machine-readable ``code`` (e.g. ``OVERLAPPING_SPANS``)
plus optional context fields, so batch stages can log and count failures by class
and the CLI can emit structured error records.
"""

from __future__ import annotations

from typing import Any


class PipelineError(Exception):
    """Base class: a failure with a stable code and optional context."""

    def __init__(self, code: str, message: str = "", **context: Any):
        self.code = code
        self.context = context
        detail = message or code
        if context:
            extras = ", ".join(f"{k}={v!r}" for k, v in sorted(context.items()))
            detail = f"{detail} ({extras})"
        super().__init__(detail)

    def to_record(self) -> dict:
        """Machine-readable form for logs and the CLI's stderr records."""
        rec = {"error": self.code, "message": str(self)}
        if self.context:
            rec["context"] = {k: repr(v) for k, v in self.context.items()}
        return rec


class LoadError(PipelineError):
    """Corpus file could not be loaded (UNREADABLE_FILE, SCHEMA_MISMATCH, EMPTY_DATASET)."""


class MaskingError(PipelineError):
    """Number extraction / masking / rendering contract violation."""


class TemplateError(PipelineError):
    """Unified-program validation, lexing, or instantiation failure."""


class ResponseParseError(PipelineError):
    """Model response violates the strict section contract."""


class ConstraintError(PipelineError):
    """Constraint line grammar or satisfiability failure."""


class CacheMiss(PipelineError):
    """Replay-mode cache lookup failed; no network fallback is permitted."""

    def __init__(self, key: str):
        super().__init__("CACHE_MISS", f"no cached response for key {key[:16]}...", key=key)


class ClientError(PipelineError):
    """LLM transport failure after retries were exhausted."""


class UsageError(PipelineError):
    """Bad CLI arguments or config; maps to exit code 2."""
