"""Rolling-window dispatch and multi-interval pricing laboratory."""

__version__ = "0.1.0"
