"""Exception types shared across the package.

Each maps to a distinct CLI exit code (see cli.py), so keep the hierarchy
flat and the meanings disjoint.
"""


class ConfigError(ValueError):
    """A parameter or configuration value violates its contract."""


class DataFormatError(ValueError):
    """Input data is malformed (bad CSV cell, empty file, wrong arity)."""


class InsufficientDataError(ValueError):
    """An operation needs more samples than the input provides."""


class ShapeError(ValueError):
    """Array dimensions are incompatible with the operation."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where the math requires finite ones."""


class InfeasibleAllocationError(RuntimeError):
    """No assignment satisfies the capacity constraints."""

    def __init__(self, message, binding_nodes=()):
        super().__init__(message)
        self.binding_nodes = tuple(binding_nodes)
