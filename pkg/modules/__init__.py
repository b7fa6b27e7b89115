"""Synthetic saccade/fixation event streams and spiking classifiers."""

__version__ = "0.1.0"
