"""Solve and verify sequential veto bargaining with a privately informed Vetoer."""

__version__ = "0.1.0"
