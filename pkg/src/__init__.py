"""
VBKT toolkit
Variational Bayesian knowledge transfer for device-mismatched scene classifiers.
"""

__version__ = "0.1.0"
