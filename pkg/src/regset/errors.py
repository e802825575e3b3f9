"""Exception hierarchy.

Every error carries a machine-readable ``code`` (the class name) so the CLI
can report it and map it to a nonzero exit status.
"""


class RegsetError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context

    @property
    def code(self):
        return type(self).__name__

    def to_dict(self):
        return {"code": self.code, "message": str(self), "context": _plain(self.context)}


def _plain(obj):
    # numpy scalars/arrays inside error context must serialize
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


class EmptyNet(RegsetError):
    pass


class InvalidNet(RegsetError):
    pass


class InvalidRadius(RegsetError):
    pass


class ScaleBelowResolution(RegsetError):
    pass


class CannotRescale(RegsetError):
    pass


class EmptyRegion(RegsetError):
    pass


class GapNotFound(RegsetError):
    pass


class InvalidLambda(RegsetError):
    pass


class InvalidParams(RegsetError):
    pass


class InvalidDimension(RegsetError):
    pass


class TooDeep(RegsetError):
    pass


class BadAddress(RegsetError):
    pass


class InsufficientChildren(RegsetError):
    pass


class InsufficientTargets(RegsetError):
    pass


class SpecMismatch(RegsetError):
    pass


class OutsideDomain(RegsetError):
    pass


class DegeneratePair(RegsetError):
    pass


class DirectionNotFound(RegsetError):
    pass


class OutsideCell(RegsetError):
    pass


class SlabOverlap(RegsetError):
    pass


class PrecisionLoss(RegsetError):
    pass


class NoVacantBall(RegsetError):
    pass


class InvalidSchedule(RegsetError):
    pass


class SchemaError(RegsetError):
    pass
