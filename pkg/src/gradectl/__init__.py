"""Grade-specific controllable text simplification tooling."""

__version__ = "0.1.0"
