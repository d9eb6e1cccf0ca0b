"""Multichannel continuous speech separation with learned MVDR beamforming."""

__version__ = "0.1.0"
