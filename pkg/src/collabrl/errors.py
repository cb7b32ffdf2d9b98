"""Exception types shared across the package."""


class CollabRLError(Exception):
    """Base class for all package errors."""


class ShapeError(CollabRLError, ValueError):
    """Structurally incompatible arrays, layers, or trajectories."""


class DomainError(CollabRLError, ValueError):
    """A value outside its documented domain (action index, level, ...)."""


class NumericError(CollabRLError, ArithmeticError):
    """A non-finite value appeared where finite arithmetic is required."""


class DegenerateWeightError(CollabRLError, ValueError):
    """An aggregation cell is covered only by zero-weight contributors."""


class DegenerateInputError(CollabRLError, ValueError):
    """An input with no usable information (zero-norm vector, empty set)."""


class ConfigError(CollabRLError, ValueError):
    """Malformed or out-of-range experiment configuration."""
