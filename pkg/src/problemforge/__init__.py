"""problemforge: synthesize hard competitive-programming problems and curate training data."""

__version__ = "0.1.0"
