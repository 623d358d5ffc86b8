"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration: bad keys, bad values, unusable combinations."""


class DataValidationError(Exception):
    """Dataset files or in-memory arrays violate the format contract."""
