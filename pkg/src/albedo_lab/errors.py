"""Exception types shared by the compute modules and the CLI."""


class AlbedoLabError(Exception):
    """Base class; `exit_code` is what the CLI returns for it."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), "details": self.details}


class DomainError(AlbedoLabError, ValueError):
    """Input outside the geometric domain of an operation."""

    exit_code = 2


class RefusalError(AlbedoLabError):
    """A precondition failed (non-subcritical pair, unresolvable beam, class violation)."""

    exit_code = 2


class AdmissibilityError(RefusalError):
    """Coefficients violate nonnegativity, support or boundedness hypotheses."""


class TruncationError(AlbedoLabError):
    """Neumann tail bound did not reach the tolerance within the allowed orders."""

    exit_code = 3


class ToleranceError(AlbedoLabError):
    """A numerical check finished but missed its tolerance."""

    exit_code = 3


class ConfigError(AlbedoLabError):
    """Experiment configuration failed validation."""

    exit_code = 2
