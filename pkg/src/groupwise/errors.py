"""Exception hierarchy shared by all pipeline stages.

Every error carries the name of the stage that raised it so the CLI can
print a module-tagged message and map the failure to an exit code
(1 usage, 2 data, 3 numeric).
"""

from __future__ import annotations


class GroupwiseError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1

    def __init__(self, message: str, *, module: str | None = None):
        super().__init__(message)
        self.module = module

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.module}: {msg}" if self.module else msg


class UsageError(GroupwiseError):
    """Bad command line, config file, or call arguments."""

    exit_code = 1


class DataError(GroupwiseError):
    """Input data violates the documented schema or invariants."""

    exit_code = 2


class OverlapError(DataError):
    """Two same-lane vehicles occupy overlapping longitudinal space."""


class NumericError(GroupwiseError):
    """A numerical procedure cannot produce a valid result."""

    exit_code = 3
