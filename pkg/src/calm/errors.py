"""Exception types shared across the package."""


class CalmError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(CalmError, ValueError):
    """An argument violates an operation's preconditions."""


class SchemaError(CalmError, ValueError):
    """A loaded file does not match the expected schema.

    ``field`` names the offending entry (dotted/indexed path) so callers
    can point at the exact problem.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegeneratePointError(CalmError, ArithmeticError):
    """A computation collapsed to a numerically meaningless result."""
