"""Shallow template-based text generation: feature-structure IR, a
production-rule realizer, a text organizer, and an air-quality report
domain."""

__version__ = "0.1.0"
