"""Exception types shared across the package; the CLI maps each to an exit code."""


class ConfigError(ValueError):
    """Unknown key, out-of-range value, or missing required setting."""


class DataValidationError(ValueError):
    """Dataset violates a schema rule; message names the sample and rule."""


class NumericsError(RuntimeError):
    """Non-finite loss or gradient; the run is aborted."""
