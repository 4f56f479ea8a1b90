"""Exception types shared across the toolkit."""

from __future__ import annotations


class NumericsError(RuntimeError):
    """A dense linear-algebra routine failed (non-convergence or conditioning).

    ``condition`` carries the offending condition-number estimate when
    conditioning is the cause, else ``None``.
    """

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class NpyFormatError(ValueError):
    """An array file violates the supported NPY subset.

    ``field`` names the offending header field ("magic", "version",
    "header", "descr", "fortran_order", "shape", or "data").
    """

    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


class ModeClosureError(ValueError):
    """A mode index set is not closed under conjugate pairing.

    ``completed`` holds the smallest closed superset, for error messages
    and CLI suggestions.
    """

    def __init__(self, message: str, completed: tuple[int, ...]):
        super().__init__(message)
        self.completed = completed
