"""Multimodal ad-creative compliance evaluation with model judging, robustness and cost tracking."""

__version__ = "0.1.0"
