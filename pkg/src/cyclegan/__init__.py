"""Unpaired image-to-image translation with cycle-consistent adversarial training."""

__version__ = "0.1.0"
