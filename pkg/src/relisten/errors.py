"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class RelistenError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(RelistenError):
    """Malformed or inconsistent configuration."""


class FormatError(RelistenError):
    """A file or byte stream does not match its documented layout."""


class ContractError(RelistenError):
    """A caller violated an operation precondition (dims, lengths, ranges)."""


class TransportError(RelistenError):
    """Socket-level failure or oversized payload on the message bus."""


class NumericError(RelistenError):
    """Non-finite value encountered where finiteness is required."""
