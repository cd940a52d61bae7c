"""Exceptions shared across the experiment surface."""


class ConfigurationError(Exception):
    """A run configuration is inconsistent or references missing inputs."""


class CapabilityError(Exception):
    """The request is valid but outside what this build can compute."""
