"""Focus-stack synthesis, depth ground-truth construction, and verification tools."""

__version__ = "0.1.0"
