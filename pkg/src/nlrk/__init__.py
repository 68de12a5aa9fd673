"""Reproducing-kernel collocation and quasi-discrete solvers for nonlocal diffusion."""

__version__ = "0.1.0"
