"""Exception hierarchy shared across the package."""


class CoordPoseError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(CoordPoseError):
    """A configuration value or derived setting is invalid."""


class InputError(CoordPoseError):
    """An input value violates a documented precondition."""


class BehindCameraError(InputError):
    """A point with non-positive depth was passed to the projection."""


class NoObjectError(CoordPoseError):
    """Stage-1 refinement found no valid object pixels; detection rejected."""


class InsufficientCorrespondencesError(CoordPoseError):
    """Fewer than the minimal number of 2D-3D correspondences survived filtering."""


class PoseFailureError(CoordPoseError):
    """RANSAC found no hypothesis with enough inliers."""


class FormatError(CoordPoseError):
    """A file does not conform to one of the documented on-disk formats."""


class UndefinedMetricError(CoordPoseError):
    """A metric is undefined for the given inputs (e.g. empty visibility union)."""
