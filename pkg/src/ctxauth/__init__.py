"""Context-aware continuous authentication from smartphone accelerometer traces."""

__version__ = "0.1.0"
