"""Exception hierarchy shared by all modules."""


class RigidityLabError(Exception):
    """Base class for every error raised by the package."""


class OutOfRangeParameter(RigidityLabError, ValueError):
    pass


class NonPositiveMeasure(RigidityLabError, ValueError):
    pass


class EmptyBoundary(RigidityLabError, ValueError):
    pass


class MeshError(RigidityLabError):
    pass


class DegenerateShape(MeshError, ValueError):
    pass


class EmptyIntersection(MeshError, ValueError):
    pass


class SelfIntersection(MeshError, ValueError):
    pass


class ParseError(MeshError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    pass


class SolverError(RigidityLabError):
    pass


class SingularSystem(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class RankDeficientPatch(SolverError):
    pass


class UnknownTag(RigidityLabError, KeyError):
    pass


class DegenerateStar(MeshError):
    pass


class NotStarshaped(RigidityLabError, ValueError):
    pass


class NonPositiveH(RigidityLabError, ValueError):
    pass
