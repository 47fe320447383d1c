"""Exceptions shared across the pipeline."""


class ValidationError(ValueError):
    """Invalid input data or configuration.  CLI exit code 1."""


class NumericError(RuntimeError):
    """Non-finite values during flow evaluation or training.  CLI exit code 2."""
