"""Exception types shared across the package."""


class SchemaError(ValueError):
    """A column is missing, unknown, or of the wrong kind."""


class DataError(ValueError):
    """A cell failed to parse, a value is out of domain, or data is empty."""


class StratificationError(ValueError):
    """A class is too small for the requested stratified split."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


class ConfigError(ValueError):
    """A pipeline configuration document is invalid."""
