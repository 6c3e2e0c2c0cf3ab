class RejectedInput(ValueError):
    """Caller supplied a key, length or buffer outside the allowed domain."""


class UnsupportedDesign(ValueError):
    pass


class PreconditionError(RuntimeError):
    pass


class InvariantViolation(AssertionError):
    """A state the hardware model declares unreachable was reached."""
