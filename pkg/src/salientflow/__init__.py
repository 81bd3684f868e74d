"""Salient-region detection in crowd video from flow-field instability."""
__version__ = "0.1.0"
