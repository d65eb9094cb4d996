"""Exception taxonomy shared by all lidf modules.

Each failure mode callers are expected to distinguish gets its own class;
everything derives from LidfError so the CLI can map errors to exit codes.
"""


class LidfError(Exception):
    """Base class for all errors raised by lidf."""


class InvalidArgumentError(LidfError, ValueError):
    """An operation was called with arguments violating its contract."""


class InvalidStateError(LidfError, RuntimeError):
    """An operation was called in a state it cannot run from (e.g. missing gradients)."""


class InvalidConfigError(LidfError, ValueError):
    """A configuration is structurally valid but cannot produce a working model/run."""


class UnsupportedFormatError(LidfError, ValueError):
    """An input file uses a codec or encoding we do not decode."""


class WavParseError(LidfError, ValueError):
    """A WAV file is malformed. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte offset {byte_offset})")
        self.byte_offset = byte_offset


class InvalidCorpusError(LidfError, ValueError):
    """A corpus directory tree does not satisfy the ingestion contract."""


class InvalidCheckpointError(LidfError, ValueError):
    """A checkpoint file is unreadable or does not match the requested architecture."""


class DivergedError(LidfError, RuntimeError):
    """Training produced a non-finite loss. Carries the epoch/batch it happened at."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class InfeasibleSpaceError(LidfError, ValueError):
    """A hyperparameter space produced only infeasible configurations."""


class EmptyReportError(LidfError, ValueError):
    """A report was requested over zero successful trials."""
