"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Invalid parameter or configuration value."""


class NumericsError(RuntimeError):
    """A numerical routine failed to converge or produced an unusable result."""


class ConvergenceError(NumericsError):
    """An iterative solver exhausted its iteration budget."""
