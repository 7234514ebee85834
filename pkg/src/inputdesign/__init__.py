"""Input design for nonlinear state-space models by Gaussian-process optimization
of a particle-smoother estimate of the Fisher information."""

__version__ = "0.1.0"
