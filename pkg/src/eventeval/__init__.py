"""Evaluation toolkit for event-centric multi-document summarization."""

__version__ = "0.1.0"
