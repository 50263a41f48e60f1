"""Exception types raised across the package."""


class VibDamageError(Exception):
    """Base class for package errors."""


class NumericalError(VibDamageError, RuntimeError):
    """A linear solve, factorization or eigensolve failed."""


class UnobservableModeError(NumericalError):
    """A mode shape has no component visible to the sensors."""


class IdentificationError(VibDamageError):
    """Modal identification could not produce the requested modes.

    ``best_residual`` carries the smallest objective value reached when the
    failure came from the optimizer, otherwise it is ``None``.
    """

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class DivergedMemberError(NumericalError):
    """An ensemble member produced non-finite values during a forecast."""

    def __init__(self, member):
        super().__init__(f"ensemble member {member} diverged (non-finite state)")
        self.member = member


class DegenerateEnsembleError(NumericalError):
    """The predicted-observation anomalies have rank zero."""


class FormatError(VibDamageError, ValueError):
    """A data file is malformed or inconsistent with the expected dimensions."""


class ConfigError(VibDamageError, ValueError):
    """A configuration file failed to parse or validate.

    The message carries ``path:line`` context when the location is known.
    """
