"""Branching Brownian motion laboratory: frontier statistics, martingales,
path localization, correlation decay and a Fisher-KPP cross-check."""

__version__ = "0.1.0"
