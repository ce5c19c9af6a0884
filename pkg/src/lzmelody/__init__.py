"""LZ78 sequential probability assignment toolkit for piano-roll melodies."""

__version__ = "0.1.0"
