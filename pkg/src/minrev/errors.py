"""Exception types shared across the package."""


class MinrevError(Exception):
    """Base class for all package-specific errors."""


class DomainError(MinrevError, ValueError):
    """A parameter or argument lies outside its mathematical domain."""


class UnsupportedError(MinrevError):
    """The requested closed form does not exist for these inputs."""


class ShapeError(MinrevError, ValueError):
    """Array arguments have inconsistent shapes."""


class ConvergenceError(MinrevError, RuntimeError):
    """An iterative fit failed to converge."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DegenerateError(MinrevError, ValueError):
    """Input data is degenerate for the requested computation."""


class DataError(MinrevError, ValueError):
    """A dataset violates a structural requirement."""


class ParseError(MinrevError, ValueError):
    """A text input could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(ParseError):
    """A text input has the wrong overall layout."""


class MissingDataError(DataError):
    """Requested cells are missing from the input tables."""

    def __init__(self, message, gaps=None):
        super().__init__(message)
        self.gaps = list(gaps) if gaps is not None else []


class SpecError(DataError):
    """A dataset request names countries or ranges not present at all."""


class GapError(DataError):
    """A panel has holes in its (year, population) grid."""


class StationarityWarning(UserWarning):
    """Monte Carlo burn-in looks insufficient."""
