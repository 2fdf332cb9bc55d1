"""Exception types shared across the package."""


class CochainError(Exception):
    """Base class for all package errors."""


class InvalidSimplex(CochainError, ValueError):
    pass


class DimensionError(CochainError, ValueError):
    """Operand shape or degree does not match what an operation expects."""


class DegreeError(CochainError, ValueError):
    """Requested degree is outside the range supported by the complex."""


class BlockShapeError(CochainError, ValueError):
    pass


class ExpressionError(CochainError, ValueError):
    """Malformed or ill-typed cochain expression."""


class ChainDegreeError(ExpressionError):
    """Degrees do not chain correctly between two nodes of an expression."""


class DivergenceError(CochainError, ArithmeticError):
    pass


class BandwidthError(CochainError, RuntimeError):
    """Perplexity bisection failed to converge."""


class UnsupportedDimension(CochainError, ValueError):
    pass


class InfiniteMismatchError(CochainError, ValueError):
    """Two diagrams carry different numbers of essential (infinite) points."""


class FormatError(CochainError, ValueError):
    """Input file could not be parsed."""
