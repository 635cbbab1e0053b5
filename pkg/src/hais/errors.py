"""Exception types shared across the package."""

from __future__ import annotations

import numpy as np


class ContractViolation(ValueError):
    """An argument broke a documented precondition (usually a shape mismatch)."""


class InputError(ValueError):
    """User-supplied data or files could not be used."""


class DegenerateDataError(InputError):
    """Data has zero variance along a direction that must be kept."""


class ModelFileError(InputError):
    """A model parameter document is malformed.

    Attributes:
        field: Name of the offending JSON field, when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class NonFiniteDynamics(RuntimeError):
    """Hamiltonian dynamics produced a non-finite gradient.

    Attributes:
        point: Position at which the gradient was evaluated.
        beta: Annealing fraction in effect, when raised from a chain.
        particle: Index of the offending particle, when raised from a chain.
    """

    def __init__(
        self,
        message: str,
        point: np.ndarray | None = None,
        beta: float | None = None,
        particle: int | None = None,
    ):
        super().__init__(message)
        self.point = point
        self.beta = beta
        self.particle = particle
