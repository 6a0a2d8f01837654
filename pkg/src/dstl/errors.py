"""Error taxonomy shared across the lab.

ValidationError maps to CLI exit code 2, CapacityError to exit code 3.
"""


class ValidationError(ValueError):
    """A precondition or input-format violation."""


class CapacityError(RuntimeError):
    """A request that exceeds a configured budget or size cap."""
