from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from gencol_mmot.measures import MarginalReport


class GenColError(Exception):
    """Base class for every error raised by gencol_mmot."""


class ShapeMismatchError(GenColError, ValueError):
    pass


class MarginalValidationError(GenColError, ValueError):
    def __init__(self, report: "MarginalReport"):
        self.report = report
        super().__init__(report.summary())


class InputFormatError(GenColError, ValueError):
    """Malformed input file. ``location`` is a byte offset or a line number."""

    def __init__(self, path: str, message: str, location: str | None = None):
        self.path = path
        self.location = location
        where = f" at {location}" if location else ""
        super().__init__(f"{path}{where}: {message}")


class DuplicateColumnError(GenColError, ValueError):
    pass


class ActiveColumnError(GenColError, ValueError):
    pass


class InfeasibleError(GenColError):
    pass


class IterationLimitError(GenColError):
    pass


class NumericalUnderflowError(GenColError, FloatingPointError):
    pass


class InvariantError(GenColError, RuntimeError):
    pass
