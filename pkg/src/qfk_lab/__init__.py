"""Quantum kernel laboratory: fidelity and Fisher kernels, Haar moment oracles, experiments."""
from __future__ import annotations

from .errors import ConvergenceError, FitError, ResourceError

__version__ = "0.1.0"

__all__ = ["ConvergenceError", "FitError", "ResourceError", "__version__"]
