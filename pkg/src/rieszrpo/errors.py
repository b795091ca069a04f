"""Exception types raised across the package."""


class RieszError(ValueError):
    """Base class for domain errors."""


class InvalidDimensionError(RieszError):
    pass


class InvalidProbabilityError(RieszError):
    pass


class EnumerationTooLargeError(RieszError):
    pass


class PositivityError(RieszError):
    """An event used by a contrast has zero probability under the design."""


class InvalidSampleSizeError(RieszError):
    pass


class SingularGramError(RieszError):
    def __init__(self, message: str, condition: float | None = None) -> None:
        super().__init__(message)
        self.condition = condition


class InvalidRateError(RieszError):
    pass


class UnsupportedConventionError(RieszError):
    pass


class SandwichViolationError(RieszError):
    """Pair sets do not satisfy corr ⊆ assumed ⊆ full."""
