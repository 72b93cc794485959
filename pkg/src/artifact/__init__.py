"""Local Parseval wavelet frames on cubes and on model manifolds."""

__version__ = "0.1.0"
