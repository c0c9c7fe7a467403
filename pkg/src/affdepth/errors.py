"""Exception types raised across the package."""


class AffdepthError(ValueError):
    """Base class for all errors raised by this package."""


class InvalidInputError(AffdepthError):
    """An argument violates a documented precondition."""


class BehindCameraError(AffdepthError):
    """A point or plane intersection lies at or behind the camera center."""


class RayParallelError(AffdepthError):
    """A viewing ray is (numerically) parallel to the queried plane."""


class DegenerateInputError(AffdepthError):
    """Geometry fitting received rank-deficient or insufficient data."""


class InsufficientDataError(AffdepthError):
    """Not enough valid measurements to construct the requested output."""


class SceneFormatError(AffdepthError):
    """A scene file or manifest is malformed."""
