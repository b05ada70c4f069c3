"""Synthetic training data from green-screen footage: keying, compositing, annotation, evaluation."""

__version__ = "0.1.0"
