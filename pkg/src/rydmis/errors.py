"""Exception types raised across the package."""


class RydmisError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""


class GraphError(RydmisError, ValueError):
    pass


class EnumerationLimitError(RydmisError):
    """Raised instead of silently truncating an exponential enumeration."""

    def __init__(self, what: str, order: int, limit: int, hint: str = ""):
        msg = f"{what}: graph order {order} exceeds the enumeration limit {limit}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)
        self.order = order
        self.limit = limit


class ScheduleError(RydmisError, ValueError):
    pass


class IntegrationError(RydmisError):
    """Schrodinger integration failed (accuracy or step-size underflow)."""


class ModelError(RydmisError):
    pass


class DatasetError(RydmisError):
    pass


class FormatError(RydmisError, ValueError):
    """A file does not match the expected schema; message carries the location."""
