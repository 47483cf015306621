"""Nondeterministic stack RNNs, baselines, and formal-language data tools."""

__version__ = "0.1.0"
