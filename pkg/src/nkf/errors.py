"""Exception types shared across the package."""


class NkfError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(NkfError, ValueError):
    """Array shapes do not chain or do not match the model."""


class DimMismatch(NkfError, ValueError):
    """Spatial dimension of a point does not match the provider."""


class MissingTangents(NkfError, ValueError):
    """A loss needing Jacobians was given a bundle without tangents."""


class DegenerateMask(NkfError, ValueError):
    """No sample carries mask weight; the Monte Carlo normalizer is zero."""


class DegenerateCurve(NkfError, ValueError):
    """Every sample of a guide curve had a vanishing derivative."""


class SingularSystem(NkfError, ValueError):
    """Least-squares normal equations are singular and ridge is disabled."""


class ProjectionFailed(NkfError, RuntimeError):
    """Closest-point projection stalled on a vanishing gradient.

    ``indices`` lists the offending points of the batch; ``points`` holds
    the partial result so callers can apply a fallback per point.
    """

    def __init__(self, indices, points=None):
        self.indices = list(indices)
        self.points = points
        super().__init__(f"projection failed for {len(self.indices)} point(s)")


class NonFiniteGradient(NkfError, FloatingPointError):
    """A parameter gradient contained NaN or infinity."""


class NonFiniteLoss(NkfError, FloatingPointError):
    """The training loss became NaN or infinite; last checkpoint is kept."""


class StepFailed(NkfError, RuntimeError):
    """More than half of the projection points were dropped in one step."""


class CheckpointError(NkfError):
    """Base class for checkpoint file problems."""


class BadMagic(CheckpointError):
    """File does not start with the checkpoint magic bytes."""


class VersionMismatch(CheckpointError):
    """Checkpoint version is not supported by this reader."""


class ChecksumMismatch(CheckpointError):
    """Checkpoint CRC32 trailer does not match the payload."""
