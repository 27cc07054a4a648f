"""Online test-time training on streams, with exact oracles for its theory."""

__version__ = "0.1.0"
