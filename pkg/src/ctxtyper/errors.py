"""Exception types shared across the package."""


class CtxTyperError(Exception):
    """Base class for every error raised by this package."""


class LexError(CtxTyperError):
    """Source text could not be tokenized. Carries the offending line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class SizingError(CtxTyperError):
    """A dataset is too small for the requested operation."""


class TargetNotFoundError(CtxTyperError):
    """An annotation target does not match any token in the stream."""


class OversizeInputError(CtxTyperError):
    """The untruncatable part of a model input exceeds the length cap."""


class BpeTrainingError(CtxTyperError):
    """The subword trainer was given an unusable corpus."""


class IdRangeError(CtxTyperError):
    """A subword id is out of range or refers to a special symbol."""


class VocabFormatError(CtxTyperError):
    """A vocabulary file is malformed or inconsistent."""


class NumericError(CtxTyperError):
    """A non-finite value appeared where finite math was required."""


class TrainingDivergedError(CtxTyperError):
    """Training produced a non-finite loss. Carries the epoch index."""

    def __init__(self, epoch: int, detail: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}: {detail}")
        self.epoch = epoch


class CheckpointError(CtxTyperError):
    """Base class for checkpoint problems."""


class CheckpointCorruptError(CheckpointError):
    """A checkpoint file is truncated or fails its checksum."""


class CheckpointCompatError(CheckpointError):
    """A checkpoint does not match the vocabulary or configuration in use."""
