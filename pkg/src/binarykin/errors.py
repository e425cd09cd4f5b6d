"""Exception hierarchy shared by all modules."""


class BinaryKinError(Exception):
    """Base class for package errors."""


class ConfigurationError(BinaryKinError, ValueError):
    """Invalid physical or numerical configuration."""


class ContractError(BinaryKinError, ValueError):
    """A documented precondition was violated by the caller."""


class NumericalError(BinaryKinError, ArithmeticError):
    """A numerical procedure failed or produced non-finite values."""


class AssemblyError(BinaryKinError):
    """Basis or matrix assembly failed (rank deficiency, sizing)."""


class DomainError(BinaryKinError, ValueError):
    """Input outside the mathematical domain of a functional."""
