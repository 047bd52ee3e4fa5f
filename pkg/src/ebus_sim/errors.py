"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Raised when an input violates a documented constraint.

    ``field`` names the offending parameter (dotted path where known) so the
    CLI can report it verbatim.
    """

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")


class InfeasibleConfigError(RuntimeError):
    """The simulation cannot be set up with the given configuration."""
