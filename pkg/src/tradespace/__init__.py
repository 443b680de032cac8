"""Mission-level trade-space engine for small bearing-only UAV ISR teams."""

__version__ = "0.1.0"
