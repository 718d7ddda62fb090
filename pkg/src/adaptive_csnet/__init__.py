"""Compressed-sensing MRI reconstruction: a wavelet ISTA/FISTA baseline and a
small unrolled network that feeds measurement-derived priors to every block."""

__version__ = "0.1.0"
