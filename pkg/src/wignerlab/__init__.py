"""Numerical verification toolkit for local semicircle laws of Wigner matrices."""

from . import ensemble, harness, lawcheck, semicircle, spectral
from .errors import (
    ConfigError,
    ContractError,
    DegeneracyError,
    DomainError,
    NumericalError,
    WignerLabError,
)

__all__ = [
    "semicircle",
    "ensemble",
    "spectral",
    "lawcheck",
    "harness",
    "WignerLabError",
    "DomainError",
    "ConfigError",
    "ContractError",
    "NumericalError",
    "DegeneracyError",
]

__version__ = "0.1.0"
