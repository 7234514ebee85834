"""Exception hierarchy shared by all modules."""


class InputDesignError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(InputDesignError, ValueError):
    pass


class CapabilityError(InputDesignError):
    """The model does not support the requested operation."""


class DegenerateFilterError(InputDesignError):
    def __init__(self, t: int, message: str | None = None):
        self.t = t
        super().__init__(message or f"all particle weights vanished at t={t}")


class BoundViolationError(InputDesignError):
    """A transition density exceeded the rejection-sampling bound rho."""


class SingularInformationError(InputDesignError):
    pass


class ConditioningError(InputDesignError):
    pass


class FittingError(InputDesignError):
    pass


class InfeasibleProposalError(InputDesignError):
    pass


class StabilityError(InputDesignError, ValueError):
    pass


class CapacityError(InputDesignError):
    pass


class ConfigError(InputDesignError):
    pass


class EvaluationError(InputDesignError):
    """An objective evaluation failed; carries the offending design point."""

    def __init__(self, design, cause: Exception):
        self.design = design
        self.cause = cause
        super().__init__(f"evaluation failed at design {list(design)}: {cause}")


class DriverAbort(InputDesignError):
    pass
