"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An artifact violates one of its declared invariants."""


class FormatError(ValueError):
    """A file is not a valid serialized artifact (bad magic, truncation, schema)."""
