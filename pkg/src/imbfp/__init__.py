"""Imbalance-message fingerprints, a small GAN over them, and affinity scores."""

__version__ = "0.1.0"
