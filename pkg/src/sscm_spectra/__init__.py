"""
sscm_spectra - Spectral inference for high-dimensional spatial-sign covariance matrices
"""

__version__ = "0.1.0"
