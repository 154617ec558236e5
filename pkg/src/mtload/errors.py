"""Exception hierarchy. Each family maps onto one CLI exit code."""


class MTLoadError(Exception):
    exit_code = 1


class ConfigError(MTLoadError, ValueError):
    exit_code = 2


class DataError(MTLoadError, ValueError):
    exit_code = 3


class InsufficientDataError(DataError):
    pass


class NumericalError(MTLoadError, FloatingPointError):
    """Non-finite state or an unsolvable fusion system.

    ``context`` carries whatever the raiser knows (calendar type,
    timestamp, model kind) so the driver can report where it happened.
    """

    exit_code = 4

    def __init__(self, message, **context):
        self.context = dict(context)
        if context:
            detail = ", ".join(f"{k}={v}" for k, v in context.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class ModelNotReadyError(MTLoadError):
    """A calendar type on the forecast path has never been updated."""

    def __init__(self, calendar_type):
        self.calendar_type = calendar_type
        super().__init__(f"observation model for calendar type {calendar_type} has no updates yet")
