"""Shared error types."""


class InvariantError(RuntimeError):
    """An internal consistency check failed.

    Raised when a quantity the library itself constructed violates a property
    it is supposed to guarantee (a certified profile that fails re-checking, a
    root that does not substitute back, a containment that breaks mid
    iteration).  User-facing input problems raise ValueError instead; the
    command line maps ValueError to exit code 1 and InvariantError to 2.
    """
