"""Exception types shared across the package."""


class WignerLabError(Exception):
    """Base class for all package errors."""


class DomainError(WignerLabError, ValueError):
    """Input outside the domain of a function (e.g. ``Im z <= 0``)."""


class ConfigError(WignerLabError, ValueError):
    """Invalid distribution, campaign or CLI configuration.

    ``field`` names the offending configuration key when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ContractError(WignerLabError, ValueError):
    """A structural precondition on an input object is violated."""


class NumericalError(WignerLabError, ArithmeticError):
    """A numerical procedure failed or hit a degenerate configuration."""


class DegeneracyError(NumericalError):
    """A pivot (typically ``|R_jj|``) fell below the division threshold."""
