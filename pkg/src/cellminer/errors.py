"""Exception types shared across the pipeline.

Exit-code mapping used by the CLI: ConfigError -> 1, DataError (and
subclasses) -> 2, IdentityCheckError -> 3.
"""


class ConfigError(Exception):
    """Invalid configuration value or malformed config file."""


class DataError(Exception):
    """Input data violates a documented contract (duplicates, bad values, ...)."""


class SchemaError(DataError):
    """Data does not match the declared variable schema."""


class IdentityCheckError(Exception):
    """An internal metric identity failed; indicates corrupted level exclusivity."""
