class LatticeEchoError(Exception):
    """Base class of all errors raised by lattice_echo."""


class ParseError(LatticeEchoError, ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ValidationError(LatticeEchoError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class SingularBasis(LatticeEchoError, ValueError):
    pass


class DimensionMismatch(LatticeEchoError, ValueError):
    pass


class LengthMismatch(LatticeEchoError, ValueError):
    pass


class GridMismatch(LatticeEchoError, ValueError):
    pass


class WindowTooLarge(LatticeEchoError, ValueError):
    pass


class GridTooLarge(LatticeEchoError, ValueError):
    pass


class RadiusExceedsWindow(LatticeEchoError, ValueError):
    pass


class NumericalFailure(LatticeEchoError, RuntimeError):
    """Recovery could not produce a consistent answer from the data."""


class RankDeficient(NumericalFailure):
    pass


class NotALattice(NumericalFailure):
    pass


class PhaseUnidentifiable(NumericalFailure):
    pass


class InsufficientPeaks(NumericalFailure):
    pass


class NoAscent(NumericalFailure):
    pass
