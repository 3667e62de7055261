"""Exception types shared across the package."""


class AuvTrackError(Exception):
    """Base class for package errors."""


class ConfigError(AuvTrackError):
    """Invalid configuration value, file, or scenario/checkpoint mismatch."""


class ContractViolation(AuvTrackError, ValueError):
    """A documented precondition was violated by the caller."""


class MalformedBeacon(AuvTrackError, ValueError):
    """A byte string could not be decoded as a beacon."""


class CheckpointError(AuvTrackError):
    """Checkpoint file is truncated, corrupt, or has an unsupported version."""
