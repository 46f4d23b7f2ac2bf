"""Exception types raised across the package."""


class ActionImagesError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(ActionImagesError, ValueError):
    pass


class ShapeError(ActionImagesError, ValueError):
    pass


class BehindCameraError(ActionImagesError):
    """A point has camera-frame depth at or below ``Z_MIN``."""

    def __init__(self, depth, message=None):
        self.depth = float(depth)
        super().__init__(message or f"point is behind the camera (Zc={self.depth:.6g})")


class EncodeError(ActionImagesError):
    """A semantic point could not be rendered into a view."""

    def __init__(self, point, depth, view=None, t=None):
        self.point = point
        self.depth = float(depth)
        self.view = view
        self.t = t
        where = "".join(
            f" {k}={v}" for k, v in (("view", view), ("t", t)) if v is not None
        )
        super().__init__(f"{point} point behind camera (Zc={self.depth:.6g}){where}")


class DecodeError(ActionImagesError):
    """Base for decode failures; ``point`` names the semantic point if any."""

    def __init__(self, message, point=None, t=None):
        self.point = point
        self.t = t
        # semantic points lifted before the failure, name -> LiftResult
        self.partial = {}
        prefix = f"[{point}] " if point else ""
        suffix = f" (t={t})" if t is not None else ""
        super().__init__(prefix + message + suffix)


class EmptyHeatmapError(DecodeError):
    pass


class NoCorrespondenceError(DecodeError):
    pass


class NoBackgroundError(DecodeError):
    pass


class DegenerateFrameError(DecodeError):
    pass


class PreconditionError(ActionImagesError, ValueError):
    pass


class ValidationError(ActionImagesError, ValueError):
    """Invalid file content; ``location`` names the offending field or step."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)
