"""Backtesting laboratory for concentrated-liquidity range management."""

__version__ = "0.1.0"
