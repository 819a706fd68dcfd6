"""Shared steering control: driver model, haptic guidance, closed-loop simulation and identification."""

__version__ = "0.1.0"
