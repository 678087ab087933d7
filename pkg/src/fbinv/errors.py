"""Exception hierarchy shared by the library and the command line tool.

Each class maps to one process exit code so the CLI can translate any
failure into the documented status without inspecting messages.
"""

from __future__ import annotations


class FbinvError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(FbinvError):
    """Malformed input text: expressions, system files, series or matrix literals."""

    exit_code = 2

    def __init__(self, message: str, pos: int | None = None):
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)
        self.pos = pos


class GenericityError(FbinvError):
    """A required rank condition fails at the base point.

    `conditions` lists the names of the failed checks so reports can
    say exactly which spans degenerated.
    """

    exit_code = 3

    def __init__(self, conditions: list[str], point=None):
        self.conditions = list(conditions)
        self.point = point
        where = "" if point is None else f" at {tuple(point)}"
        super().__init__("genericity failed" + where + ": " + ", ".join(self.conditions))


class NumericalError(FbinvError):
    """Integration, root finding, or evaluation broke down."""

    exit_code = 4


class EvalError(NumericalError):
    """Expression evaluation hit an invalid operation (domain error, division by zero)."""


class CapExceededError(FbinvError):
    """A weight scan passed its cap without finding an admissible pair."""

    exit_code = 5
