"""Numerics for the two-species Boltzmann equation with soft potentials and unequal masses."""
from .errors import (AssemblyError, BinaryKinError, ConfigurationError, ContractError,
                     DomainError, NumericalError)
from .kinematics import MassPair

__version__ = "0.1.0"

__all__ = [
    "MassPair",
    "BinaryKinError",
    "ConfigurationError",
    "ContractError",
    "NumericalError",
    "AssemblyError",
    "DomainError",
]
