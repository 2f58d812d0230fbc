"""Numerical blow-up laboratory for ``u_t = Δu + |u|^{p-1}u``."""

from .core import (
    ConfigurationError,
    DomainError,
    InitialData,
    ProblemSpec,
    Snapshot,
    derive_exponents,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "InitialData",
    "ProblemSpec",
    "Snapshot",
    "derive_exponents",
]
