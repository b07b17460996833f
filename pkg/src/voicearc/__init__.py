"""Signed, hash-chained archiving of RTP voice calls."""

__version__ = "0.1.0"
