"""Two-stage trial designs that report a certified lower bound on the best retained arm."""

__version__ = "0.1.0"
