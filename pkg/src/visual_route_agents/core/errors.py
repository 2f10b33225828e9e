"""
Error Types Module

This module defines the exception hierarchy shared by all harness components.
Route defects and parse problems are not exceptions; they travel as data in
validation reports, parse outcomes and experiment records.
"""


class HarnessError(Exception):
    """Base class for all harness errors."""


class InvalidSizeError(HarnessError):
    """An instance was requested or loaded with fewer than two nodes."""


class DomainError(HarnessError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(HarnessError):
    """Settings, render styles or run directories are unusable as configured."""


class InfeasibleError(HarnessError):
    """The instance cannot host the requested number of salesmen."""


class InstanceSizeError(HarnessError):
    """The instance is too large for exhaustive enumeration."""


class InputError(HarnessError):
    """Inputs that must describe the same instances do not."""


class GatewayError(HarnessError):
    """Base class for agent gateway failures."""


class TransportError(GatewayError):
    """The backend could not be reached after all retries."""


class CredentialError(GatewayError):
    """Credentials are missing or were rejected by the backend."""


class MockMisuseError(GatewayError):
    """The mock backend was invoked without its structured context."""


class EmptyReplyError(GatewayError):
    """The backend answered with no text."""
