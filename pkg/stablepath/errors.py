"""
Exception hierarchy shared by the stablepath modules.
"""


class StablePathError(Exception):
    """Base class for every error raised by stablepath."""


class ParameterError(StablePathError, ValueError):
    """Invalid parameters, mismatched lengths or too little data."""


class SamplingRangeError(StablePathError, ValueError):
    """A sampling window falls outside the time span of a trace."""


class NumericError(StablePathError, ArithmeticError):
    """A numerical system could not be solved (e.g. singular Vandermonde matrix)."""


class NoRouteError(StablePathError, LookupError):
    """No candidate path exists between a source and a destination."""


class ArtifactFormatError(StablePathError, ValueError):
    """A trace, scenario or model file is malformed or has an unknown version."""
