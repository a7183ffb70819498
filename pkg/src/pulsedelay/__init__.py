"""Multipath delay estimation from band-limited OFDM CSI using the pulse shape."""

__version__ = "0.1.0"
