class InputError(ValueError):
    """Invalid user-supplied document, file, or argument. The CLI maps this
    to exit code 2."""


class TraceExhausted(InputError):
    """System-state trace does not cover the requested simulation time."""
