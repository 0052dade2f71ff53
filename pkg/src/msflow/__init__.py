"""Multisymplectic back-to-labels integrators for EPDiff / Camassa-Holm."""

__version__ = "0.1.0"
