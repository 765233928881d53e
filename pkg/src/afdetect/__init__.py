"""Atrial-fibrillation detection from single-lead ECGs via CWT scalograms and multi-branching ResNet."""

__version__ = "0.1.0"
