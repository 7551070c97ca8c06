"""Compile knowledge graphs into text fine-tuning and evaluation datasets."""

__version__ = "0.1.0"
