"""Commonsense-infused political-polarity prediction for multilingual headlines."""

__version__ = "0.1.0"
