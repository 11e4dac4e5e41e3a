"""Exception and warning types.

Every error carries an ``exit_code`` used by the command line front end:
1 input error, 2 domain error, 3 convergence failure, 4 insufficient data.
"""

from __future__ import annotations


class OmCavityError(Exception):
    exit_code = 1


class InputError(OmCavityError, ValueError):
    """Malformed or incomplete input (files, metadata, arguments)."""

    exit_code = 1


class DomainError(OmCavityError, ValueError):
    """Input is well formed but the physics/numerics cannot produce an answer."""

    exit_code = 2


class ConvergenceError(OmCavityError, RuntimeError):
    exit_code = 3


class InsufficientData(OmCavityError, ValueError):
    exit_code = 4


# netfoster
class EmptyNetwork(InputError):
    pass


class GridAtPole(DomainError):
    pass


class NoModeFound(DomainError):
    pass


class GridTooCoarse(DomainError):
    pass


class NonPositiveCp(DomainError):
    pass


# omresponse
class NonPositiveRate(DomainError):
    pass


class NegativeCooperativity(DomainError):
    pass


class MissingAttenuation(InputError):
    pass


class MissingMass(InputError):
    pass


class MissingMetadata(InputError):
    pass


# fitkit
class NotConverged(ConvergenceError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SingularJacobian(ConvergenceError):
    pass


class NoResonanceFound(DomainError):
    pass


class NoDipFound(DomainError):
    pass


class DegenerateFit(DomainError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NegativeSlope(DomainError):
    pass


class TooFewPoints(InsufficientData):
    pass


# electrotune
class PullInExceeded(DomainError):
    pass


class SidebandWarning(UserWarning):
    """Model evaluated outside the sideband-resolved regime (omega_m <= kappa)."""


class PositiveCurvatureWarning(UserWarning):
    """Frequency rises with bias; stiffening is not part of the softening model."""


class SublinearWarning(UserWarning):
    """High-power cooperativity points fall well below the low-power line."""
