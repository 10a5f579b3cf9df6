"""GIF-based investor sentiment index and return-predictability toolkit."""

__version__ = "0.1.0"
