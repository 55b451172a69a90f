"""Exception hierarchy shared by all maskpress modules."""


class MaskpressError(Exception):
    """Base class for all package errors."""


class InvalidInput(MaskpressError):
    """Input violates a precondition (empty text, empty prompt, ...)."""


class ShapeError(MaskpressError):
    """Mask / sequence length mismatch."""


class AlignmentError(MaskpressError):
    """Source texts differ, so masks cannot be realigned."""


class SegmentationError(MaskpressError):
    """Delimiter spec matched no boundary in the prompt text."""


class ConfigError(MaskpressError):
    """Invalid configuration value or combination."""


class ScoringError(MaskpressError):
    """A prompt cannot be scored (empty query set, foreign tokens)."""


class RemoteError(MaskpressError):
    """Remote evaluator unreachable after all retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class ProtocolError(MaskpressError):
    """Remote evaluator answered with a malformed payload."""


class LossError(MaskpressError):
    """Loss undefined (no visible positions to score)."""


class TrainError(MaskpressError):
    """Training diverged; carries the last good parameter snapshot."""

    def __init__(self, message: str, checkpoint: bytes | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class TaError(MaskpressError):
    """Oracle failure during threshold-accepting search.

    The trajectory accumulated so far is attached so the caller can persist
    it and resume later.
    """

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ResumeError(MaskpressError):
    """Checkpoint file is corrupt or belongs to a different prompt."""
