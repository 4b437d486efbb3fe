"""Exceptions shared by the library and the command line."""


class InputError(ValueError):
    """Malformed input: bad dimensions, non-finite values, out-of-range parameters."""


class EmptySampleError(InputError):
    """Every kernel weight is zero, so there is nothing to estimate from."""


class PreconditionRefused(RuntimeError):
    """A requested computation needs conditions that do not hold."""

    def __init__(self, message: str, violated: list[str] | None = None):
        super().__init__(message)
        self.violated = list(violated or [])
