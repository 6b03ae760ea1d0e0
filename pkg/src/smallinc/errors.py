"""Exception hierarchy shared by all modules."""


class SmallIncError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(SmallIncError, ValueError):
    """A scene or configuration violates a well-posedness constraint."""


class NumericalError(SmallIncError, ArithmeticError):
    """A numerical stage failed (singular system, non-convergence, ...)."""


class ResonanceError(NumericalError):
    """The wavenumber sits too close to a Dirichlet eigenvalue of the unit disk."""


class MissingArtifactError(SmallIncError, FileNotFoundError):
    """An upstream pipeline artifact has not been produced yet."""
