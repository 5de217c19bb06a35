"""Duplicate detection, leakage-free splitting and recall@k auditing for audio datasets."""

__version__ = "0.1.0"
