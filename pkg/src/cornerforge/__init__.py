"""Compile expert corner cases into dataset queries and score detectors against them."""

__version__ = "0.1.0"
