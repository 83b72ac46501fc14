"""Spatial audio upmixing: ambisonic encoding, evaluation metrics and a learned spatializer."""

__version__ = "0.1.0"
