"""Toolkit for training and evaluating text-to-image reward models from
coarse versus fine-grained feedback."""

__version__ = "0.1.0"
