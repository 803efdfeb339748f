"""Exception types raised by the numerical routines."""


class QGLError(Exception):
    """Base class for all package errors."""


class DirichletProximity(QGLError):
    """Energy lies too close to a Dirichlet eigenvalue of some edge."""

    def __init__(self, energy, distance, threshold):
        self.energy = energy
        self.distance = distance
        self.threshold = threshold
        super().__init__(
            f"E={energy!r} is within {distance:.3e} of the Dirichlet spectrum "
            f"(threshold {threshold:.1e})"
        )


class BranchAmbiguity(QGLError):
    """Eigenvalue branches of the reduced operator could not be resolved."""


class BracketingError(QGLError):
    """A root could not be bracketed; the parameters are inconsistent."""


class IntervalMeetsDelta(QGLError):
    """An energy interval required to avoid the forbidden set meets it."""


class PreconditionError(QGLError):
    """An experiment was requested outside the regime it is valid for."""


class DegenerateFit(QGLError):
    """Too few usable points for a least-squares fit."""
