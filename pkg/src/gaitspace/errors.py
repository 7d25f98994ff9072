"""Exception types shared across the package."""


class GaitspaceError(Exception):
    """Base class for all package-specific errors."""


class OutOfReach(GaitspaceError):
    """IK target lies outside the leg workspace."""


class InfeasibleGait(GaitspaceError):
    """Commanded stride/cadence combination exceeds the leg workspace."""


class DimensionMismatch(GaitspaceError):
    """Array shape does not match the declared layer or model dimensions."""


class NonFiniteLoss(GaitspaceError):
    """Training loss became NaN or infinite."""


class AmbiguousDrive(GaitspaceError):
    """No single latent dimension dominates the gait-frequency power."""


class InvalidCutoff(GaitspaceError):
    """Filter cutoff outside (0, Nyquist)."""


class IndexOutOfRange(GaitspaceError):
    """Latent index outside the latent vector."""


class InsufficientHistory(GaitspaceError):
    """State buffer does not yet span a full encoder window."""


class PlannerStall(GaitspaceError):
    """Planner reported InsufficientHistory after warm-up."""


class CorruptHeader(GaitspaceError):
    """Dataset file magic/version is wrong."""


class StatMismatch(GaitspaceError):
    """Dataset header statistics disagree with the body."""


class TruncatedBody(GaitspaceError):
    """Dataset body ends before the declared length.

    Carries the byte offset at which the file ran out.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class ShapeMismatch(GaitspaceError):
    """Checkpoint parameter arrays disagree with the stored config."""


class MissingField(GaitspaceError):
    """Checkpoint/config document lacks a required field."""


class MalformedMessage(GaitspaceError):
    """Wire message failed to decode."""
