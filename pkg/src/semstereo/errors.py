"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Base class for camera-geometry failures."""


class BehindCameraError(GeometryError):
    """A 3D point has non-positive depth in the camera it is projected into."""


class DegenerateHomographyError(GeometryError):
    """The support plane passes through a camera center; no homography exists."""


class SceneFormatError(ValueError):
    """A manifest, raster, depth-map or point-cloud file is malformed.

    The message names the offending file, view or point.
    """


class NoDepthPriorError(ValueError):
    """A view has no visible sparse point to bound its depth search range."""


class EmptyViewError(ValueError):
    """A synthetic camera sees none of the scene geometry."""


class StageError(RuntimeError):
    """A pipeline stage failed; the message is tagged with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} stage: {cause}")
        self.stage = stage
        self.cause = cause
