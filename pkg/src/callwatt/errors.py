"""Exception types shared across the toolkit."""

from __future__ import annotations


class CallwattError(Exception):
    """Base class for all toolkit errors."""


class InvalidReadingError(CallwattError):
    """A raw counter reading is negative or exceeds the counter range."""


class MalformedSeriesError(CallwattError):
    """A sample series is not ordered by timestamp."""


class InvalidWindowError(CallwattError):
    """An energy window has t_end earlier than t_start."""


class StartupError(CallwattError):
    """A configured sampling backend could not be initialized.

    Carries the list of channels that are unavailable as a result.
    """

    def __init__(self, message: str, missing_channels: tuple[str, ...] = ()):
        super().__init__(message)
        self.missing_channels = missing_channels


class UnavailableChannelError(CallwattError):
    """A requested sensor channel is not provided by any backend."""


class UndefinedCVError(CallwattError):
    """Coefficient of variation is undefined (empty series or zero mean)."""


class CalibrationTooShortError(CallwattError):
    """Calibration gathered fewer samples than the stability window."""


class InsufficientDataError(CallwattError):
    """Fewer samples available than the stability window requires."""


class UndefinedCorrelationError(CallwattError):
    """Correlation is undefined because one input has zero variance."""


class DegenerateTestError(CallwattError):
    """All paired differences are zero; the signed-rank test is undefined."""


class SourceParseError(CallwattError):
    """Target script does not parse; carries the offending location."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class DaemonError(CallwattError):
    """Control-socket request failed or the daemon is unreachable."""
