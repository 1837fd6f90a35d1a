"""Exceptions shared across configuration loading and validation."""


class ConfigError(Exception):
    """Configuration is structurally wrong or internally inconsistent."""


class ValidationError(Exception):
    """A runtime input (script, API body, rule edit) failed validation."""
