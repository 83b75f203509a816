"""Stochastic integrals for nonorthogonal Gaussian noises and the limit theory
of canonical von Mises statistics of psi-mixing uniform sequences."""

__version__ = "0.1.0"
