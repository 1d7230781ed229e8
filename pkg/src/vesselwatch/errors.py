"""Exception types shared across the package."""


class VesselWatchError(Exception):
    """Base class for all package errors."""


class InputError(VesselWatchError):
    """Bad input data, configuration, or file contents (CLI exit code 1)."""


class InvariantError(VesselWatchError):
    """An internal invariant was violated (CLI exit code 2)."""
