"""Acceptance-trace collector for speculative decoding on HF model pairs."""

from .collect import CollectorConfig, CollectorError, collect

__version__ = "0.1.0"

__all__ = ["CollectorConfig", "CollectorError", "collect", "__version__"]
