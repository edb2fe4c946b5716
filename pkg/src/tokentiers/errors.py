"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI: ConfigError -> 1, DataError -> 2,
InternalError -> 3.
"""


class TokenTiersError(Exception):
    """Base class for all package errors."""


class ConfigError(TokenTiersError):
    """Invalid configuration, registry, or mapping file."""


class DataError(TokenTiersError):
    """Input data cannot support the requested computation."""


class EmptyInputError(DataError):
    """A source yielded zero valid records."""


class NoBaseAssetsError(DataError):
    """Tier-0 discovery produced an empty candidate set."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UndefinedMultiplierError(DataError):
    """Layering multiplier undefined because tier-0 TVL is zero."""


class NoRuleError(TokenTiersError):
    """No receipt-naming rule registered for a protocol."""


class InternalError(TokenTiersError):
    """An internal invariant was violated; indicates a bug."""
