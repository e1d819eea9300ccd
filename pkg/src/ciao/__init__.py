"""Generate system-level architecture documentation from a code repository with an LLM."""

__version__ = "0.1.0"
