"""Friction-work reward shaping for planar pushing tasks."""

__version__ = "0.1.0"
