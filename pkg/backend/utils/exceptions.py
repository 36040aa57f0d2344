"""
Domain exceptions
Every error raised on purpose by the simulator derives from MECError
"""

from typing import Optional


class MECError(Exception):
    """Base class for simulator errors"""


class InvalidProfileError(MECError):
    """A terminal or server profile has a non-positive field"""


class InvalidInputError(MECError):
    """A formula received an argument outside its domain"""


class LinkUnavailableError(MECError):
    """The uplink rate is zero, so the task must be processed locally"""


class ConfigError(MECError):
    """Configuration failed validation"""

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class InvalidRequestError(MECError):
    """An offloading request references a terminal outside [0, M)"""


class InvalidCallError(MECError):
    """An operation was called with arguments it cannot act on"""


class CombinatorialLimitError(MECError):
    """The joint action space 2^M is too large to enumerate"""


class CheckpointError(MECError):
    """A checkpoint is missing or does not match the expected layout"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message)


class CapacityViolationError(MECError):
    """More bits were processed in one slot than the slot capacity allows"""


class ConservationError(MECError):
    """Generated bits no longer equal processed + queued + in-flight bits"""
