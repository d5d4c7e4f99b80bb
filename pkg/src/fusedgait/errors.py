"""Exception types shared across the gait controller."""


class GaitError(Exception):
    """Base class for all package errors."""


class ParameterError(GaitError, ValueError):
    """An argument or configuration value violates a precondition."""


class StateError(GaitError, RuntimeError):
    """An operation was called on an object whose state cannot support it."""


class ReachabilityError(GaitError, ValueError):
    """An inverse-kinematics target lies outside the reachable workspace."""

    def __init__(self, msg, closest=None):
        super().__init__(msg)
        self.closest = closest


class ModelError(GaitError, ValueError):
    """A rigid-body model description is malformed."""


class NumericError(GaitError, ArithmeticError):
    """A numerical routine failed to converge or hit a singular system."""


class ConfigError(GaitError, ValueError):
    """A configuration file could not be parsed or validated."""
