"""Exception hierarchy shared across the benchmark engine."""

from __future__ import annotations


class DriftprobeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DriftprobeError):
    """Invalid configuration: bad config file, non-adjacent buckets, bad CLI args."""


class IngestError(DriftprobeError):
    """Unrecoverable dump-stream corruption. Carries the byte offset reached."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class RenderError(DriftprobeError):
    """A cloze query could not be rendered (e.g. empty subject label)."""


class TransportError(DriftprobeError):
    """A backend request failed at the transport level. Retryable."""


class ProtocolError(DriftprobeError):
    """A backend response violated the wire contract (e.g. mask-count mismatch)."""


class FixtureError(DriftprobeError):
    """A mock-backend fixture file failed validation. Carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class ContractError(DriftprobeError):
    """An upstream contract was violated (e.g. unfiltered queries reached a probe)."""


class StageError(DriftprobeError):
    """A pipeline stage failed. Carries the stage name and a replayable command."""

    def __init__(self, stage: str, message: str, replay: str | None = None):
        detail = f"stage '{stage}' failed: {message}"
        if replay:
            detail += f" (replay with: {replay})"
        super().__init__(detail)
        self.stage = stage
        self.replay = replay
