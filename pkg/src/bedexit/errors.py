"""Exception hierarchy with stable machine-readable error codes.

Every error raised across the package carries a short uppercase code so the
CLI can emit `bedexit: error [CODE] message` on stderr and scripts can match
on the code rather than the prose.
"""

from __future__ import annotations


class BedexitError(Exception):
    """Base class; `code` is stable across releases."""

    code = "ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ConfigError(BedexitError):
    code = "CONFIG_INVALID"


class UnknownConfigKeyError(ConfigError):
    code = "CONFIG_UNKNOWN_KEY"


class DataError(BedexitError):
    code = "DATA_INVALID"


class CheckpointFormatError(BedexitError):
    code = "CHECKPOINT_FORMAT"


class CheckpointMismatchError(BedexitError):
    code = "CHECKPOINT_MISMATCH"


class EmptySplitError(BedexitError):
    code = "SPLIT_EMPTY"


class InfeasibleFractionError(BedexitError):
    code = "INFEASIBLE_FRACTION"


class NonFiniteError(BedexitError):
    code = "NON_FINITE"
