"""Exception types raised across the package."""


class APKineticError(Exception):
    pass


class GridError(APKineticError, ValueError):
    pass


class DegenerateStateError(APKineticError, ValueError):
    pass


class InvalidMomentsError(APKineticError, ValueError):
    pass


class NegativeDensityError(APKineticError, ValueError):
    pass


class UnknownSchemeError(APKineticError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UnsupportedOrderError(APKineticError, ValueError):
    pass


class SingularMatrixError(APKineticError, ArithmeticError):
    pass


class ConfigError(APKineticError, ValueError):
    pass


class BlowUpError(APKineticError, FloatingPointError):
    """Stage values became non-finite, exceeded the blow-up threshold, or left no valid Maxwellian."""

    def __init__(self, message, stage=None, lam=None):
        super().__init__(message)
        self.stage = stage
        self.lam = lam
