"""Federated tabular data augmentation simulator."""

__version__ = "0.1.0"
