"""semloc: semantic-guided local feature detection, description and matching."""

__version__ = "0.1.0"
